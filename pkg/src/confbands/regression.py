"""Formula-driven linear and logistic fitting, and nonparametric-bootstrap
simultaneous bands for fitted mean outcomes and coefficient sets.

The bootstrap resamples rows with replacement, refits, and studentizes the
deviation of each replicate's prediction (or coefficient vector) by that
replicate's own standard error; the band half-width is the empirical
(1 - alpha)-quantile of the per-replicate maxima times the original fit's
standard error. Logistic mean-outcome bands are built on the linear-predictor
scale and mapped through the inverse link.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import Domain, SCBand, assemble_band, empirical_quantile, substream

__all__ = [
    "Table",
    "Term",
    "ModelSpec",
    "FittedGLM",
    "FormulaError",
    "parse_formula",
    "build_design",
    "fit_ols",
    "fit_logistic",
    "predict_mean",
    "scb_mean_bootstrap",
    "scb_coef_bootstrap",
]

SEPARATION_NORM = 1e3


class FormulaError(ValueError):
    """Malformed model formula; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class Table:
    """Named, equal-length numeric columns."""

    names: tuple[str, ...]
    columns: dict

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("column names must be unique")
        lengths = {len(np.asarray(self.columns[n])) for n in self.names}
        if len(lengths) > 1:
            raise ValueError("columns must have equal length")
        cols = {n: np.asarray(self.columns[n], dtype=float) for n in self.names}
        object.__setattr__(self, "columns", cols)

    @property
    def n_rows(self) -> int:
        return len(self.columns[self.names[0]]) if self.names else 0

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise ValueError(f"unknown column {name!r}")
        return self.columns[name]

    def take(self, idx) -> "Table":
        return Table(self.names, {n: self.columns[n][idx] for n in self.names})

    @classmethod
    def from_arrays(cls, **named) -> "Table":
        return cls(tuple(named.keys()), dict(named))

    @classmethod
    def from_csv(cls, path) -> "Table":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise ValueError(f"{path}: empty CSV")
            rows = [row for row in reader if row]
        data = {name: [] for name in header}
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"{path}: ragged CSV row {row!r}")
            for name, cell in zip(header, row):
                data[name].append(float(cell))
        return cls(tuple(header), {k: np.asarray(v) for k, v in data.items()})


@dataclass(frozen=True)
class Term:
    kind: str  # "main" | "power" | "all"
    name: str = ""
    power: int = 0

    def label(self) -> str:
        if self.kind == "main":
            return self.name
        if self.kind == "power":
            return f"I({self.name}^{self.power})"
        return "."


@dataclass(frozen=True)
class ModelSpec:
    """Parsed formula: response plus predictor terms (intercept implicit)."""

    response: str
    terms: tuple[Term, ...]


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            raise FormulaError(f"expected {ch!r}", self.pos)
        self.pos += 1

    def name(self) -> str:
        self.skip_ws()
        start = self.pos
        if self.pos >= len(self.text) or not (
            self.text[self.pos].isalpha() or self.text[self.pos] == "_"
        ):
            raise FormulaError("expected a column name", self.pos)
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "_"
        ):
            self.pos += 1
        return self.text[start:self.pos]

    def integer(self) -> int:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if start == self.pos:
            raise FormulaError("expected an integer exponent", start)
        return int(self.text[start:self.pos])

    def done(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def parse_formula(text: str) -> ModelSpec:
    """Parse ``response ~ term (+ term)*`` with terms NAME, I(NAME^INT), or '.'.

    Whitespace-insensitive; the intercept is always implicit. Powers must be
    integers >= 2; duplicate terms and a response reused as a predictor are
    rejected.
    """
    sc = _Scanner(text)
    response = sc.name()
    sc.expect("~")
    if sc.peek() == "~":
        raise FormulaError("unexpected '~'", sc.pos)
    terms: list[Term] = []
    while True:
        if sc.peek() == ".":
            sc.pos += 1
            terms.append(Term("all"))
        elif sc.peek() == "I":
            mark = sc.pos
            name = sc.name()
            if name != "I" or sc.peek() != "(":
                # a plain name that happens to start with I
                sc.pos = mark
                terms.append(Term("main", sc.name()))
            else:
                sc.expect("(")
                var = sc.name()
                sc.expect("^")
                k = sc.integer()
                sc.expect(")")
                if k < 2:
                    raise FormulaError("power must be >= 2", sc.pos)
                terms.append(Term("power", var, k))
        else:
            terms.append(Term("main", sc.name()))
        if sc.done():
            break
        sc.expect("+")
    if not terms:
        raise FormulaError("no predictor terms", sc.pos)
    if len(set(terms)) != len(terms):
        raise FormulaError("duplicate terms", 0)
    for t in terms:
        if t.name == response:
            raise FormulaError("response cannot appear as a predictor", 0)
    return ModelSpec(response, tuple(terms))


def build_design(table: Table, spec: ModelSpec) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Expand a ModelSpec against a table: (X with leading intercept,
    term names, response vector). '.' expands to every non-response column
    in table order."""
    if spec.response not in table.columns:
        raise ValueError(f"response column {spec.response!r} not in table")
    cols: list[np.ndarray] = [np.ones(table.n_rows)]
    names: list[str] = ["intercept"]
    for term in spec.terms:
        if term.kind == "all":
            for name in table.names:
                if name != spec.response:
                    cols.append(table.column(name))
                    names.append(name)
        elif term.kind == "main":
            cols.append(table.column(term.name))
            names.append(term.name)
        else:
            cols.append(table.column(term.name) ** term.power)
            names.append(term.label())
    if len(set(names)) != len(names):
        raise ValueError("duplicate design columns after expansion")
    X = np.column_stack(cols)
    y = table.column(spec.response)
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("non-finite values in modeled columns")
    return X, names, y


@dataclass(frozen=True)
class FittedGLM:
    """A fitted linear or logistic model: coefficients, their covariance,
    and the design expansion used."""

    family: str  # "gaussian" | "binomial"
    beta: np.ndarray
    cov_beta: np.ndarray
    term_names: tuple[str, ...]
    spec: ModelSpec
    sigma2: float | None = None


def _check_rank(X: np.ndarray, names: list[str]) -> None:
    # pivoted QR exposes which columns are (numerically) dependent
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(X.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        bad = sorted(names[j] for j in piv[rank:])
        raise ValueError(f"design is rank deficient; collinear columns: {', '.join(bad)}")


def fit_ols(table: Table, spec: ModelSpec) -> FittedGLM:
    """Least squares fit; cov_beta = sigma2 * (X'X)^-1 with
    sigma2 = RSS / (n - p)."""
    X, names, y = build_design(table, spec)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more rows ({n}) than design columns ({p})")
    _check_rank(X, names)
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    sigma2 = float(resid @ resid) / (n - p)
    cov = sigma2 * np.linalg.inv(X.T @ X)
    return FittedGLM("gaussian", beta, cov, tuple(names), spec, sigma2=sigma2)


def _expit(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _irls(X, y, max_iter, tol):
    """Newton/IRLS for the logistic log-likelihood from beta = 0.

    Returns (beta, cov) or raises; convergence is max |X'(y - p)| < tol.
    """
    n, p = X.shape
    beta = np.zeros(p)
    for _ in range(max_iter):
        prob = _expit(X @ beta)
        score = X.T @ (y - prob)
        if np.max(np.abs(score)) < tol:
            w = prob * (1.0 - prob)
            info = (X * w[:, None]).T @ X
            return beta, np.linalg.inv(info)
        w = np.maximum(prob * (1.0 - prob), 1e-12)
        info = (X * w[:, None]).T @ X
        beta = beta + np.linalg.solve(info, score)
        if np.linalg.norm(beta) > SEPARATION_NORM:
            raise ValueError("quasi-separation")
    raise ValueError("IRLS failed")


def fit_logistic(table: Table, spec: ModelSpec, max_iter: int = 50, tol: float = 1e-8) -> FittedGLM:
    """Logistic fit by IRLS; cov_beta = (X'WX)^-1 at convergence."""
    X, names, y = build_design(table, spec)
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("logistic response must take values in {0, 1}")
    if table.n_rows <= X.shape[1]:
        raise ValueError("need more rows than design columns")
    _check_rank(X, names)
    beta, cov = _irls(X, y, max_iter, tol)
    return FittedGLM("binomial", beta, cov, tuple(names), spec)


def _grid_design(fit: FittedGLM, grid: Table) -> np.ndarray:
    needed = {t.name for t in fit.spec.terms if t.kind in ("main", "power")}
    missing = needed - set(grid.names)
    if missing:
        raise ValueError(f"grid is missing columns: {', '.join(sorted(missing))}")
    cols = [np.ones(grid.n_rows)]
    for name in fit.term_names[1:]:
        if name.startswith("I(") and name.endswith(")"):
            var, k = name[2:-1].split("^")
            cols.append(grid.column(var) ** int(k))
        else:
            cols.append(grid.column(name))
    return np.column_stack(cols)


def predict_mean(fit: FittedGLM, grid: Table) -> tuple[np.ndarray, np.ndarray]:
    """Estimated mean outcome and its SE on a test grid.

    For the binomial family both are on the linear-predictor scale; the
    back-transform happens only when a band is assembled.
    """
    G = _grid_design(fit, grid)
    eta = G @ fit.beta
    se = np.sqrt(np.maximum(np.einsum("gp,pq,gq->g", G, fit.cov_beta, G), 0.0))
    return eta, se


# ---------------------------------------------------------------------------
# Bootstrap internals (batched refits; one RNG substream per replicate)
# ---------------------------------------------------------------------------


def _ols_refit_batch(X, y, idx):
    """OLS on each resampled row set. Returns (beta, sigma2, ok)."""
    B = idx.shape[0]
    n, p = X.shape
    Xb = X[idx]  # (B, n, p)
    yb = y[idx]
    XtX = np.einsum("bnp,bnq->bpq", Xb, Xb)
    Xty = np.einsum("bnp,bn->bp", Xb, yb)
    beta = np.full((B, p), np.nan)
    ok = np.ones(B, dtype=bool)
    try:
        beta = np.linalg.solve(XtX, Xty[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for b in range(B):
            try:
                beta[b] = np.linalg.solve(XtX[b], Xty[b])
            except np.linalg.LinAlgError:
                ok[b] = False
    resid = yb - np.einsum("bnp,bp->bn", Xb, beta)
    sigma2 = np.einsum("bn,bn->b", resid, resid) / (n - p)
    ok &= np.all(np.isfinite(beta), axis=1)
    return beta, sigma2, XtX, ok


def _irls_refit_batch(X, y, idx, max_iter=50, tol=1e-8):
    """Batched IRLS across replicates; failures (separation, singular
    information, no convergence) are flagged, not raised."""
    B = idx.shape[0]
    n, p = X.shape
    Xb = X[idx]
    yb = y[idx]
    beta = np.zeros((B, p))
    ok = np.ones(B, dtype=bool)
    active = np.ones(B, dtype=bool)
    info = np.zeros((B, p, p))
    for _ in range(max_iter):
        if not active.any():
            break
        eta = np.einsum("bnp,bp->bn", Xb[active], beta[active])
        prob = _expit(eta)
        score = np.einsum("bnp,bn->bp", Xb[active], yb[active] - prob)
        conv = np.max(np.abs(score), axis=1) < tol
        w = np.maximum(prob * (1.0 - prob), 1e-12)
        inf_act = np.einsum("bnp,bn,bnq->bpq", Xb[active], w, Xb[active])
        idx_active = np.flatnonzero(active)
        info[idx_active] = inf_act
        still = idx_active[~conv]
        active[idx_active[conv]] = False
        if still.size == 0:
            continue
        try:
            step = np.linalg.solve(inf_act[~conv], score[~conv][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.full((still.size, p), np.nan)
            for j, b in enumerate(still):
                try:
                    step[j] = np.linalg.solve(info[b], score[~conv][j])
                except np.linalg.LinAlgError:
                    pass
        beta[still] += step
        bad = ~np.all(np.isfinite(beta[still]), axis=1)
        bad |= np.linalg.norm(beta[still], axis=1) > SEPARATION_NORM
        if bad.any():
            failed = still[bad]
            ok[failed] = False
            active[failed] = False
    ok &= ~active  # replicates still active never converged
    cov = np.full((B, p, p), np.nan)
    good = np.flatnonzero(ok)
    if good.size:
        try:
            cov[good] = np.linalg.inv(info[good])
        except np.linalg.LinAlgError:
            for b in good:
                try:
                    cov[b] = np.linalg.inv(info[b])
                except np.linalg.LinAlgError:
                    ok[b] = False
    return beta, cov, ok


def _fit_family(table, spec, family):
    if family == "gaussian":
        return fit_ols(table, spec)
    if family == "binomial":
        return fit_logistic(table, spec)
    raise ValueError(f"unknown family {family!r}")


_FAMILY_ALIASES = {
    "gaussian": "gaussian",
    "linear": "gaussian",
    "binomial": "binomial",
    "binomial-logit": "binomial",
    "logistic": "binomial",
}


def _canon_family(family: str) -> str:
    try:
        return _FAMILY_ALIASES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}") from None


def _bootstrap_max_stats(X, y, family, stat_design, center, n_boot, seed):
    """Per-replicate max standardized deviations for the resampling bootstrap.

    ``stat_design``: design matrix mapping coefficients to the statistic grid
    (identity for coefficient bands). ``center``: the original-fit statistic
    on that grid. Failed refits are redrawn (fresh substream per attempt),
    capped at 10 * n_boot attempts in total.
    """
    n = X.shape[0]
    r_max = np.full(n_boot, np.nan)
    pending = np.arange(n_boot)
    attempt = np.zeros(n_boot, dtype=int)
    total_attempts = 0
    while pending.size:
        total_attempts += pending.size
        if total_attempts > 10 * n_boot:
            raise RuntimeError(
                "bootstrap exceeded the retry budget (10 * n_boot failed refits)"
            )
        idx = np.empty((pending.size, n), dtype=np.intp)
        for j, b in enumerate(pending):
            rng = substream(seed, int(b), int(attempt[b]))
            idx[j] = rng.integers(0, n, size=n)
        if family == "gaussian":
            beta, sigma2, XtX, ok = _ols_refit_batch(X, y, idx)
            cov = np.full(XtX.shape, np.nan)
            good = np.flatnonzero(ok)
            if good.size:
                try:
                    cov[good] = np.linalg.inv(XtX[good]) * sigma2[good, None, None]
                except np.linalg.LinAlgError:
                    for b in good:
                        try:
                            cov[b] = np.linalg.inv(XtX[b]) * sigma2[b]
                        except np.linalg.LinAlgError:
                            ok[b] = False
        else:
            beta, cov, ok = _irls_refit_batch(X, y, idx)
        stat = np.einsum("gp,bp->bg", stat_design, beta)
        var = np.einsum("gp,bpq,gq->bg", stat_design, cov, stat_design)
        se = np.sqrt(np.maximum(var, 0.0))
        num = np.abs(stat - center[None, :])
        zero = se == 0
        # zero SE with zero numerator contributes 0; otherwise the replicate
        # is degenerate and gets redrawn
        degen = np.any(zero & (num > 0), axis=1)
        ok &= ~degen & np.all(np.isfinite(se), axis=1)
        ratio = np.zeros_like(num)
        np.divide(num, se, out=ratio, where=~zero)
        stats = ratio.max(axis=1)
        done = np.flatnonzero(ok)
        r_max[pending[done]] = stats[done]
        failed = pending[~ok]
        attempt[failed] += 1
        pending = failed
    return r_max


def scb_mean_bootstrap(
    table: Table,
    spec: ModelSpec,
    grid: Table,
    family: str = "gaussian",
    n_boot: int = 1000,
    alpha: float = 0.05,
    grid_boot: Table | None = None,
    seed: int = 0,
) -> SCBand:
    """Simultaneous band for the mean outcome over a test grid.

    Resamples rows with replacement, refits, and records the grid maximum of
    |prediction_b - prediction| / se_b; the band is the original prediction
    plus/minus the (1 - alpha)-quantile of those maxima times the original
    SE. The max statistic is evaluated on ``grid_boot`` when given, else on
    ``grid``. Binomial bands are built on the linear-predictor scale and
    returned on the probability scale.
    """
    family = _canon_family(family)
    if grid.n_rows == 0:
        raise ValueError("grid must be nonempty")
    if n_boot < 100:
        raise ValueError("n_boot must be at least 100")
    fit = _fit_family(table, spec, family)
    X, _, y = build_design(table, spec)
    eta, se = predict_mean(fit, grid)
    G_boot = _grid_design(fit, grid_boot if grid_boot is not None else grid)
    center = G_boot @ fit.beta
    r_max = _bootstrap_max_stats(X, y, family, G_boot, center, n_boot, seed)
    a = empirical_quantile(r_max, 1.0 - alpha)
    if se.max(initial=0.0) <= 1e-10 * max(1.0, float(np.abs(eta).max(initial=0.0))):
        warnings.warn("degenerate band: zero sampling variance on the grid")
    domain = Domain.grid1d(np.arange(grid.n_rows, dtype=float)) if grid.n_rows > 1 else Domain.grid1d([0.0])
    if len(grid.names) >= 1:
        # a strictly increasing first grid column doubles as the plot axis
        axis = grid.column(grid.names[0])
        if axis.size == 1 or np.all(np.diff(axis) > 0):
            domain = Domain.grid1d(axis)
    if family == "binomial":
        return assemble_band(_expit(eta), se, a, 1.0, alpha, domain, link="logit")
    return assemble_band(eta, se, a, 1.0, alpha, domain)


def scb_coef_bootstrap(
    table: Table,
    spec: ModelSpec,
    family: str = "gaussian",
    n_boot: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> SCBand:
    """Simultaneous intervals for all fitted coefficients (discrete domain).

    Same algorithm as the mean band with the coefficient vector as the
    statistic and each replicate's coefficient SEs as the studentizer.
    Binomial coefficients stay on the log-odds scale.
    """
    family = _canon_family(family)
    if n_boot < 100:
        raise ValueError("n_boot must be at least 100")
    fit = _fit_family(table, spec, family)
    X, _, y = build_design(table, spec)
    p = len(fit.beta)
    se = np.sqrt(np.maximum(np.diag(fit.cov_beta), 0.0))
    r_max = _bootstrap_max_stats(X, y, family, np.eye(p), fit.beta, n_boot, seed)
    a = empirical_quantile(r_max, 1.0 - alpha)
    domain = Domain.discrete(fit.term_names)
    return assemble_band(fit.beta, se, a, 1.0, alpha, domain)
