"""Inverting a band that was built elsewhere.

Any model that yields an estimate, a pointwise SE, and a simultaneous
critical value can feed the region machinery: assemble the band (or write
the band JSON from another tool), then invert and plot. Here the "external
model" is a hand-rolled kernel smoother with a crude max-statistic
calibration - the point is the interface, not the estimator.
"""

import os
import subprocess
import sys

import numpy as np

import confbands as cb

out_dir = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(out_dir, exist_ok=True)

rng = np.random.default_rng(99)
n = 200
x = np.sort(rng.uniform(0, 1, n))
y = np.sin(2 * np.pi * x) + rng.standard_normal(n) * 0.4

grid = np.linspace(0.05, 0.95, 60)
h = 0.08
W = np.exp(-0.5 * ((grid[:, None] - x[None, :]) / h) ** 2)
W /= W.sum(axis=1, keepdims=True)
eta = W @ y
resid = y - np.interp(x, grid, eta)
se = np.sqrt((W**2) @ resid**2)

# crude simultaneous critical value by a gaussian multiplier bootstrap
g = rng.standard_normal((2000, n))
stats = np.abs((g * resid) @ W.T) / se[None, :]
q = cb.empirical_quantile(stats.max(axis=1), 0.95)
print(f"external smoother: simultaneous q = {q:.3f}")

band = cb.assemble_band(eta, se, q, 1.0, 0.05, cb.Domain.grid1d(grid))
band_path = os.path.join(out_dir, "external_band.json")
with open(band_path, "w") as fh:
    fh.write(cb.band_to_json(band))

regions = cb.invert_levels(band, cb.ThresholdSpec("upper", (-0.2,)))
r = regions[0]
print(f"region where the smooth confidently exceeds -0.2: "
      f"{grid[r.inner].min():.2f} .. {grid[r.inner].max():.2f}")

# the same inversion through the CLI, from the band file alone
proc = subprocess.run(
    [sys.executable, "-m", "confbands.cli", "invert", "--band", band_path,
     "--levels=-0.2", "--out", os.path.join(out_dir, "external_regions.json"),
     "--quiet"],
    capture_output=True, text=True,
)
print(f"CLI invert exit code: {proc.returncode}")
print("region file:", os.path.join(out_dir, "external_regions.json"))
