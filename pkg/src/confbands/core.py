"""Shared primitives: evaluation domains, band assembly, max-statistic quantiles,
and seeded RNG substreams.

Every band produced by this package is an :class:`SCBand` over a :class:`Domain`.
Bands are immutable after construction and reconstructible bit-for-bit from
``(eta_hat, se, q_alpha, tau, link)``; :func:`assemble_band` is the only
constructor other code should use.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Domain",
    "SCBand",
    "RngStream",
    "substream",
    "empirical_quantile",
    "assemble_band",
    "max_abs_standardized",
    "band_to_json",
    "band_from_json",
]

_KINDS = ("grid1d", "grid2d", "discrete")
_LINKS = ("identity", "logit")


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible generator for one unit of work.

    Streams are keyed, not sequential: ``substream(seed, b)`` for replicate
    ``b`` yields the same draws no matter how replicates are scheduled, so
    serial and parallel execution agree.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream_id) pair identifying one reproducible random stream."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return substream(self.seed, self.stream_id)


@dataclass(frozen=True)
class Domain:
    """Evaluation domain: a 1D grid, a 2D grid with optional mask, or labels.

    2D fields over the domain are arrays of shape
    ``(len(coords1), len(coords2))`` (coords1-major). ``mask`` marks included
    cells (True = included); masked cells carry NaN in band fields.
    """

    kind: str
    coords1: np.ndarray | None = None
    coords2: np.ndarray | None = None
    labels: tuple[str, ...] | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "discrete":
            if self.labels is None or len(self.labels) == 0:
                raise ValueError("discrete domain requires labels")
            object.__setattr__(self, "labels", tuple(str(v) for v in self.labels))
            if len(set(self.labels)) != len(self.labels):
                raise ValueError("labels must be unique")
        else:
            c1 = np.asarray(self.coords1, dtype=float)
            if c1.ndim != 1 or c1.size == 0:
                raise ValueError("coords1 must be a nonempty 1-D sequence")
            if c1.size > 1 and not np.all(np.diff(c1) > 0):
                raise ValueError("coords1 must be strictly increasing")
            object.__setattr__(self, "coords1", c1)
            if self.kind == "grid2d":
                c2 = np.asarray(self.coords2, dtype=float)
                if c2.ndim != 1 or c2.size == 0:
                    raise ValueError("coords2 must be a nonempty 1-D sequence")
                if c2.size > 1 and not np.all(np.diff(c2) > 0):
                    raise ValueError("coords2 must be strictly increasing")
                object.__setattr__(self, "coords2", c2)
            elif self.coords2 is not None:
                raise ValueError("coords2 only valid for grid2d domains")
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != self.shape:
                raise ValueError(
                    f"mask shape {m.shape} does not match domain shape {self.shape}"
                )
            if not m.any():
                raise ValueError("mask excludes every cell")
            object.__setattr__(self, "mask", m)

    @property
    def shape(self) -> tuple[int, ...]:
        if self.kind == "grid2d":
            return (self.coords1.size, self.coords2.size)
        if self.kind == "grid1d":
            return (self.coords1.size,)
        return (len(self.labels),)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def mask_array(self) -> np.ndarray:
        """Inclusion mask, all-True when no mask was given."""
        if self.mask is None:
            return np.ones(self.shape, dtype=bool)
        return self.mask

    @classmethod
    def grid1d(cls, coords) -> "Domain":
        return cls("grid1d", coords1=coords)

    @classmethod
    def grid2d(cls, coords1, coords2, mask=None) -> "Domain":
        return cls("grid2d", coords1=coords1, coords2=coords2, mask=mask)

    @classmethod
    def discrete(cls, labels) -> "Domain":
        return cls("discrete", labels=tuple(labels))


def _check_field(name: str, values, shape) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


@dataclass(frozen=True)
class SCBand:
    """A simultaneous confidence band over a :class:`Domain`.

    ``scb_low``/``scb_up`` are derived fields: for the identity link they
    equal ``eta_hat -/+ q_alpha * se / tau``; for the logit link the same
    arithmetic is applied on the log-odds scale and mapped back, so the band
    brackets a probability. ``validate`` recomputes them and demands
    bit-for-bit agreement.
    """

    domain: Domain
    eta_hat: np.ndarray
    se: np.ndarray
    q_alpha: float
    alpha: float
    scb_low: np.ndarray
    scb_up: np.ndarray
    tau: float = 1.0
    link: str = "identity"

    def validate(self) -> None:
        shape = self.domain.shape
        for name in ("eta_hat", "se", "scb_low", "scb_up"):
            _check_field(name, getattr(self, name), shape)
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.q_alpha < 0:
            raise ValueError("q_alpha must be nonnegative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.link not in _LINKS:
            raise ValueError(f"unknown link {self.link!r}")
        m = self.domain.mask_array()
        if np.any(self.se[m] < 0):
            raise ValueError("se must be nonnegative")
        if not (np.all(np.isfinite(self.eta_hat[m])) and np.all(np.isfinite(self.se[m]))):
            raise ValueError("band fields must be finite at unmasked cells")
        low, up = _band_limits(self.eta_hat, self.se, self.q_alpha, self.tau, self.link)
        if not (
            np.array_equal(low[m], self.scb_low[m])
            and np.array_equal(up[m], self.scb_up[m])
        ):
            raise ValueError("band reconstruction failed: scb_low/scb_up are not "
                             "derived from (eta_hat, se, q_alpha, tau)")
        if np.any(self.scb_low[m] > self.eta_hat[m]) or np.any(self.eta_hat[m] > self.scb_up[m]):
            raise ValueError("band does not bracket eta_hat")

    def with_domain(self, domain: Domain) -> "SCBand":
        band = dataclasses.replace(self, domain=domain)
        band.validate()
        return band


def _logit(p):
    return np.log(p) - np.log1p(-p)


def _expit(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _band_limits(eta_hat, se, q, tau, link):
    half = (q / tau) * se
    if link == "identity":
        return eta_hat - half, eta_hat + half
    lin = _logit(eta_hat)
    return _expit(lin - half), _expit(lin + half)


def empirical_quantile(samples, level: float) -> float:
    """Conservative empirical quantile: the ceil(level*B)-th order statistic.

    Deterministic ceil-rank rule (no interpolation), so results reproduce
    across platforms.
    """
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("no bootstrap samples")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite statistic")
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    rank = int(np.ceil(level * arr.size))
    rank = min(max(rank, 1), arr.size)
    return float(np.partition(arr, rank - 1)[rank - 1])


def assemble_band(
    eta_hat,
    se,
    q: float,
    tau: float,
    alpha: float,
    domain: Domain,
    link: str = "identity",
) -> SCBand:
    """Build an SCBand from an estimate, its pointwise SE, and a critical value.

    Masked cells are set to NaN in every field. For ``link="logit"`` the
    inputs are on the probability scale with ``se`` on the log-odds scale,
    and the band is the inverse-logit image of the log-odds band.
    """
    shape = domain.shape
    eta_hat = _check_field("eta_hat", eta_hat, shape).copy()
    se = _check_field("se", se, shape).copy()
    m = domain.mask_array()
    if np.any(se[m] < 0):
        raise ValueError("se must be nonnegative")
    if tau <= 0:
        raise ValueError("tau must be positive")
    if q < 0:
        raise ValueError("q must be nonnegative")
    eta_hat[~m] = np.nan
    se[~m] = np.nan
    low, up = _band_limits(eta_hat, se, float(q), float(tau), link)
    band = SCBand(
        domain=domain,
        eta_hat=eta_hat,
        se=se,
        q_alpha=float(q),
        alpha=float(alpha),
        scb_low=low,
        scb_up=up,
        tau=float(tau),
        link=link,
    )
    band.validate()
    return band


def max_abs_standardized(delta, se, mask=None) -> float:
    """max over unmasked cells of |delta| / se.

    A cell with se == 0 and delta == 0 contributes 0 (a point estimated
    exactly with zero variance is trivially covered); se == 0 against a
    nonzero delta is an error.
    """
    delta = np.asarray(delta, dtype=float)
    se = np.asarray(se, dtype=float)
    if delta.shape != se.shape:
        raise ValueError(f"shape mismatch: {delta.shape} vs {se.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != delta.shape:
            raise ValueError("mask shape mismatch")
        delta = delta[mask]
        se = se[mask]
    zero = se == 0
    if np.any(zero & (delta != 0)):
        raise ValueError("degenerate SE")
    ratio = np.zeros_like(delta)
    np.divide(np.abs(delta), se, out=ratio, where=~zero)
    return float(ratio.max()) if ratio.size else 0.0


# ---------------------------------------------------------------------------
# Band file format
# ---------------------------------------------------------------------------
#
# Canonical JSON: fixed key order, floats at 17 significant digits, masked
# cells serialized as null. load -> save round-trips byte-identically.


def _fmt_number(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if np.isnan(v):
        return "null"
    if not np.isfinite(v):
        raise ValueError("non-finite value in JSON output")
    return format(v, ".17g")


def _emit(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, str):
        import json as _json

        return _json.dumps(obj)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, float, np.integer, np.floating)):
        return _fmt_number(obj)
    if isinstance(obj, dict):
        items = ", ".join(f"{_emit(str(k))}: {_emit(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        return "[" + ", ".join(_emit(v) for v in seq) + "]"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def emit_json(obj: dict) -> str:
    """Serialize a dict built from numbers/strings/lists to canonical JSON."""
    return _emit(obj) + "\n"


def _domain_to_dict(domain: Domain) -> dict:
    return {
        "kind": domain.kind,
        "coords1": None if domain.coords1 is None else domain.coords1,
        "coords2": None if domain.coords2 is None else domain.coords2,
        "labels": None if domain.labels is None else list(domain.labels),
        "mask": None if domain.mask is None else domain.mask.ravel().tolist(),
    }


def _domain_from_dict(d: dict) -> Domain:
    kind = d["kind"]
    mask = d.get("mask")
    if kind == "discrete":
        return Domain.discrete(d["labels"])
    if kind == "grid1d":
        m = None if mask is None else np.asarray(mask, dtype=bool)
        return Domain("grid1d", coords1=d["coords1"], mask=m)
    c1 = np.asarray(d["coords1"], dtype=float)
    c2 = np.asarray(d["coords2"], dtype=float)
    m = None
    if mask is not None:
        m = np.asarray(mask, dtype=bool).reshape(c1.size, c2.size)
    return Domain.grid2d(c1, c2, mask=m)


def _field_to_list(values: np.ndarray) -> list:
    out = []
    for v in np.asarray(values, dtype=float).ravel():
        out.append(None if np.isnan(v) else float(v))
    return out


def band_to_json(band: SCBand) -> str:
    """Serialize a band to its canonical JSON string (2D fields row-major)."""
    band.validate()
    doc = {
        "domain": _domain_to_dict(band.domain),
        "shape": list(band.domain.shape),
        "link": band.link,
        "eta_hat": _field_to_list(band.eta_hat),
        "se": _field_to_list(band.se),
        "q_alpha": band.q_alpha,
        "tau": band.tau,
        "alpha": band.alpha,
        "scb_low": _field_to_list(band.scb_low),
        "scb_up": _field_to_list(band.scb_up),
    }
    return emit_json(doc)


def band_from_json(text: str) -> SCBand:
    """Parse a band file and check its reconstruction invariant."""
    import json

    doc = json.loads(text)
    domain = _domain_from_dict(doc["domain"])
    shape = tuple(doc["shape"])
    if shape != domain.shape:
        raise ValueError(f"shape entry {shape} does not match domain {domain.shape}")

    def load_field(name):
        raw = doc[name]
        arr = np.array([np.nan if v is None else float(v) for v in raw], dtype=float)
        return arr.reshape(shape)

    band = SCBand(
        domain=domain,
        eta_hat=load_field("eta_hat"),
        se=load_field("se"),
        q_alpha=float(doc["q_alpha"]),
        alpha=float(doc["alpha"]),
        scb_low=load_field("scb_low"),
        scb_up=load_field("scb_up"),
        tau=float(doc.get("tau", 1.0)),
        link=doc.get("link", "identity"),
    )
    band.validate()
    return band
