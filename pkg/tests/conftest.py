import numpy as np
import pytest

from confbands.core import Domain, assemble_band


def random_band(rng, kind="grid1d", max_len=200, max_side=30, masked=False):
    """A random valid band over a random domain, for property tests."""
    if kind == "grid1d":
        n = int(rng.integers(1, max_len + 1))
        domain = Domain.grid1d(np.sort(rng.uniform(-5, 5, n) + np.arange(n) * 10.0))
        shape = (n,)
        mask = None
    elif kind == "grid2d":
        n1 = int(rng.integers(2, max_side + 1))
        n2 = int(rng.integers(2, max_side + 1))
        shape = (n1, n2)
        mask = None
        if masked:
            mask = rng.random(shape) < 0.8
            if not mask.any():
                mask.flat[0] = True
        domain = Domain.grid2d(np.arange(n1, dtype=float), np.arange(n2, dtype=float), mask=mask)
    else:
        n = int(rng.integers(1, 20))
        domain = Domain.discrete([f"c{i}" for i in range(n)])
        shape = (n,)
        mask = None
    eta = rng.standard_normal(shape) * 2.0
    se = rng.uniform(0.0, 1.5, shape)
    q = float(rng.uniform(0.0, 4.0))
    return assemble_band(eta, se, q, 1.0, 0.05, domain)


@pytest.fixture
def rng():
    return np.random.default_rng(20240615)
