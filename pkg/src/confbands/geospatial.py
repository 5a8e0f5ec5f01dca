"""Spot-wise generalized least squares over a masked 2D grid and a
multiplier bootstrap band for a linear functional of the coefficients.

Each spot is fit independently under a within-spot error covariance
(AR(1), compound symmetry, an explicit matrix, or none); the band for
eta(s) = w'beta(s) reuses the multiplier-t machinery on whitened
per-observation contributions, with one multiplier draw per observation
shared across spots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import Domain, SCBand, assemble_band, empirical_quantile, substream
from .functional import multiplier_max_stats

__all__ = [
    "SpatialObservations",
    "CorrelationSpec",
    "GLSFit",
    "build_correlation",
    "fit_gls_spot",
    "fit_gls_grid",
    "scb_gls",
]


@dataclass(frozen=True)
class SpatialObservations:
    """Repeated observations on a 2D grid: value cube of shape
    (n_obs, n_x, n_y) plus an optional inclusion mask over (n_x, n_y)."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        Z = np.asarray(self.values, dtype=float)
        if Z.ndim != 3 or Z.shape[1] != x.size or Z.shape[2] != y.size:
            raise ValueError(
                f"values must have shape (n_obs, {x.size}, {y.size}), got {Z.shape}"
            )
        m = self.mask
        if m is not None:
            m = np.asarray(m, dtype=bool)
            if m.shape != (x.size, y.size):
                raise ValueError("mask shape must match the grid")
            if not m.any():
                raise ValueError("mask excludes every spot")
        if not np.all(np.isfinite(Z[:, m] if m is not None else Z)):
            raise ValueError("non-finite values at unmasked spots")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "values", Z)
        object.__setattr__(self, "mask", m)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    def mask_array(self) -> np.ndarray:
        if self.mask is None:
            return np.ones((self.x.size, self.y.size), dtype=bool)
        return self.mask


@dataclass(frozen=True)
class CorrelationSpec:
    """Within-spot error correlation: ar1(rho), comp_symm(rho), an explicit
    per-spot (or shared) covariance, or none. ``rho=None`` requests
    estimation from lag-1 OLS residual autocorrelation, held fixed
    afterwards. ``groups`` partitions the observation axis; correlation is
    zero across groups."""

    kind: str = "none"
    rho: float | None = None
    V: np.ndarray | None = None
    groups: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("ar1", "comp_symm", "explicit", "none"):
            raise ValueError(f"unknown correlation kind {self.kind!r}")
        if self.kind == "explicit" and self.V is None:
            raise ValueError("explicit correlation needs V")
        if self.rho is not None and not (-1.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (-1, 1)")
        if self.groups is not None:
            object.__setattr__(self, "groups", np.asarray(self.groups))


def _group_slices(groups, n):
    if groups is None:
        return [np.arange(n)]
    groups = np.asarray(groups)
    if groups.shape != (n,):
        raise ValueError("groups must assign one label per observation")
    return [np.flatnonzero(groups == g) for g in dict.fromkeys(groups.tolist())]


def build_correlation(spec: CorrelationSpec, n: int) -> np.ndarray:
    """Correlation matrix for n observations under the given structure.

    ar1: R_ij = rho^|i-j| within each group; comp_symm: rho off-diagonal
    within group; cross-group entries are zero; none: identity.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if spec.kind == "none":
        return np.eye(n)
    if spec.kind == "explicit":
        raise ValueError("explicit covariance has no correlation structure to build")
    rho = spec.rho
    if rho is None:
        raise ValueError("rho is required (or estimated upstream)")
    R = np.eye(n)
    for idx in _group_slices(spec.groups, n):
        m = idx.size
        if m <= 1:
            continue
        if spec.kind == "ar1":
            block = rho ** np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
        else:
            if rho < -1.0 / (m - 1):
                raise ValueError(
                    f"compound symmetry with rho={rho} is not positive definite "
                    f"for group size {m}"
                )
            block = np.full((m, m), rho)
            np.fill_diagonal(block, 1.0)
        R[np.ix_(idx, idx)] = block
    return R


@dataclass(frozen=True)
class GLSFit:
    """Per-spot GLS results over the grid: coefficient fields, the weighted
    functional eta = w'beta, and its pointwise SE."""

    beta: np.ndarray  # (n_x, n_y, p), NaN at masked spots
    eta: np.ndarray  # (n_x, n_y)
    se: np.ndarray  # (n_x, n_y)
    w: np.ndarray
    design: np.ndarray


def fit_gls_spot(X, z, V) -> tuple[np.ndarray, np.ndarray]:
    """GLS at one spot via whitening: beta = (X'V^-1 X)^-1 X'V^-1 z, with
    the coefficient covariance scaled by the whitened residual variance
    RSS/(n - p)."""
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    V = np.asarray(V, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValueError("need more observations than design columns")
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        raise ValueError("covariance V is singular or not positive definite") from None
    Xw = scipy.linalg.solve_triangular(L, X, lower=True)
    zw = scipy.linalg.solve_triangular(L, z, lower=True)
    XtX = Xw.T @ Xw
    try:
        XtX_inv = np.linalg.inv(XtX)
    except np.linalg.LinAlgError:
        raise ValueError("design matrix is singular") from None
    beta = XtX_inv @ (Xw.T @ zw)
    resid = zw - Xw @ beta
    sigma2 = float(resid @ resid) / (n - p)
    return beta, sigma2 * XtX_inv


def _estimate_rho(resid: np.ndarray, groups) -> float:
    """Lag-1 autocorrelation of residuals (Yule-Walker), adjacency within
    groups only."""
    num = 0.0
    for idx in _group_slices(groups, resid.size):
        e = resid[idx]
        if e.size >= 2:
            num += float(e[:-1] @ e[1:])
    den = float(resid @ resid)
    if den <= 0:
        return 0.0
    return float(np.clip(num / den, -0.99, 0.99))


def fit_gls_grid(
    data: SpatialObservations, design, w, corr: CorrelationSpec | None = None
) -> tuple[GLSFit, np.ndarray]:
    """Fit GLS at every unmasked spot.

    Returns the per-spot fit fields together with the (n_obs, n_spots)
    matrix of whitened per-observation contributions to eta_hat, used by the
    multiplier bootstrap. Any spot failure aborts with the offending
    coordinates listed.
    """
    X = np.asarray(design, dtype=float)
    w = np.asarray(w, dtype=float)
    n, p = X.shape
    if n != data.n_obs:
        raise ValueError("design rows must match the number of observations")
    if w.shape != (p,):
        raise ValueError("w must have one weight per design column")
    if n <= p:
        raise ValueError("need more observations than design columns")
    corr = corr or CorrelationSpec("none")
    mask = data.mask_array()
    spots = np.argwhere(mask)
    if spots.size == 0:
        raise ValueError("all spots are masked")

    nx, ny = mask.shape
    beta_field = np.full((nx, ny, p), np.nan)
    eta = np.full((nx, ny), np.nan)
    se = np.full((nx, ny), np.nan)
    contrib = np.zeros((n, spots.shape[0]))
    failures = []

    shared_V = None
    if corr.kind == "none":
        shared_V = np.eye(n)
    elif corr.kind in ("ar1", "comp_symm") and corr.rho is not None:
        shared_V = build_correlation(corr, n)
    elif corr.kind == "explicit" and np.asarray(corr.V).ndim == 2:
        shared_V = np.asarray(corr.V, dtype=float)

    ols_pinv = None
    if shared_V is None and corr.kind in ("ar1", "comp_symm"):
        ols_pinv = np.linalg.pinv(X)

    for k, (i, j) in enumerate(spots):
        z = data.values[:, i, j]
        try:
            if shared_V is not None:
                V = shared_V
            elif corr.kind == "explicit":
                V = np.asarray(corr.V, dtype=float)[i, j]
            else:
                rho = _estimate_rho(z - X @ (ols_pinv @ z), corr.groups)
                V = build_correlation(
                    CorrelationSpec(corr.kind, rho=rho, groups=corr.groups), n
                )
            L = np.linalg.cholesky(V)
            Xw = scipy.linalg.solve_triangular(L, X, lower=True)
            zw = scipy.linalg.solve_triangular(L, z, lower=True)
            XtX_inv = np.linalg.inv(Xw.T @ Xw)
            beta = XtX_inv @ (Xw.T @ zw)
            resid = zw - Xw @ beta
            sigma2 = float(resid @ resid) / (n - p)
            cov = sigma2 * XtX_inv
        except (np.linalg.LinAlgError, ValueError) as exc:
            failures.append(f"({data.x[i]:g}, {data.y[j]:g}): {exc}")
            continue
        beta_field[i, j] = beta
        eta[i, j] = w @ beta
        se[i, j] = np.sqrt(max(w @ cov @ w, 0.0))
        c = XtX_inv @ w
        contrib[:, k] = n * (Xw @ c) * resid

    if failures:
        raise ValueError("GLS fit failed at spots: " + "; ".join(failures))
    return GLSFit(beta_field, eta, se, w, X), contrib


def scb_gls(
    data: SpatialObservations,
    design,
    w,
    corr: CorrelationSpec | None = None,
    n_boot: int = 1000,
    alpha: float = 0.1,
    seed: int = 0,
    weights: str = "rademacher",
    sd_method: str = "t",
) -> SCBand:
    """Simultaneous band for eta(s) = w'beta(s) over the unmasked grid.

    Fits GLS per spot, then runs the multiplier-t procedure on whitened
    per-observation contributions to eta_hat (one multiplier per observation,
    shared across spots) to calibrate the max statistic. Masked spots carry
    no band values.
    """
    fit, contrib = fit_gls_grid(data, design, w, corr)
    rng = substream(seed)
    maxima = multiplier_max_stats(contrib, n_boot, weights, sd_method, rng)
    q = empirical_quantile(maxima, 1.0 - alpha)
    mask = data.mask_array()
    domain = Domain.grid2d(data.x, data.y, mask=None if data.mask is None else mask)
    return assemble_band(fit.eta, fit.se, q, 1.0, alpha, domain)
