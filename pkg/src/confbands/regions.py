"""Invert a simultaneous confidence band into inner/outer confidence regions
for threshold excursion sets.

All comparisons are non-strict, matching the closed sets [c, inf) and
(-inf, c]; a cell where a band surface equals the threshold exactly belongs
to both a set and its closed complement. Masked cells are False in every
region field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Domain, SCBand, emit_json

__all__ = [
    "ThresholdSpec",
    "RegionSet",
    "ContainmentSummary",
    "invert_upper",
    "invert_lower",
    "invert_interval",
    "invert_two_sided",
    "invert_levels",
    "check_containment",
    "true_region",
    "regions_to_json",
    "regions_from_json",
]

_SET_TYPES = ("upper", "lower", "two_sided", "interval")


@dataclass(frozen=True)
class ThresholdSpec:
    """Threshold list for one inversion: plain levels, or (low, up) pairs
    for interval sets. Level order is preserved; no de-duplication."""

    set_type: str
    levels: tuple

    def __post_init__(self):
        if self.set_type not in _SET_TYPES:
            raise ValueError(f"unknown set_type {self.set_type!r}")
        if len(self.levels) == 0:
            raise ValueError("levels must be nonempty")
        norm = []
        for lv in self.levels:
            if self.set_type == "interval":
                a, b = lv
                a, b = float(a), float(b)
                if not (np.isfinite(a) and np.isfinite(b)):
                    raise ValueError("interval endpoints must be finite")
                if a > b:
                    raise ValueError("empty interval")
                norm.append((a, b))
            else:
                c = float(lv)
                if not np.isfinite(c):
                    raise ValueError("levels must be finite")
                norm.append(c)
        object.__setattr__(self, "levels", tuple(norm))


@dataclass(frozen=True)
class RegionSet:
    """Inner/outer confidence regions and the point-estimate region for one
    threshold. inner <= estimate <= outer pointwise whenever the band is
    valid."""

    set_type: str
    level: object
    inner: np.ndarray
    outer: np.ndarray
    estimate: np.ndarray


@dataclass(frozen=True)
class ContainmentSummary:
    contain_individual: tuple[bool, ...]

    @property
    def contain_all(self) -> bool:
        return all(self.contain_individual)


def _masked(domain: Domain, *fields):
    m = domain.mask_array()
    return tuple(np.where(m, f, False) for f in fields)


def invert_upper(band: SCBand, c: float) -> RegionSet:
    """Regions for the upper excursion set {s: eta(s) >= c}.

    inner = {scb_low >= c}, outer = {scb_up >= c}, estimate = {eta_hat >= c}.
    """
    c = float(c)
    if not np.isfinite(c):
        raise ValueError("threshold must be finite")
    inner, outer, est = _masked(
        band.domain, band.scb_low >= c, band.scb_up >= c, band.eta_hat >= c
    )
    return RegionSet("upper", c, inner, outer, est)


def invert_lower(band: SCBand, c: float) -> RegionSet:
    """Regions for the lower excursion set {s: eta(s) <= c}.

    inner = {scb_up <= c}, outer = {scb_low <= c}, estimate = {eta_hat <= c}.
    """
    c = float(c)
    if not np.isfinite(c):
        raise ValueError("threshold must be finite")
    inner, outer, est = _masked(
        band.domain, band.scb_up <= c, band.scb_low <= c, band.eta_hat <= c
    )
    return RegionSet("lower", c, inner, outer, est)


def invert_interval(band: SCBand, a: float, b: float) -> RegionSet:
    """Regions for the interval set {s: a <= eta(s) <= b}.

    inner = {scb_low >= a} & {scb_up <= b};
    outer = {scb_up >= a} & {scb_low <= b}.
    """
    a, b = float(a), float(b)
    if a > b:
        raise ValueError("empty interval")
    inner, outer, est = _masked(
        band.domain,
        (band.scb_low >= a) & (band.scb_up <= b),
        (band.scb_up >= a) & (band.scb_low <= b),
        (band.eta_hat >= a) & (band.eta_hat <= b),
    )
    return RegionSet("interval", (a, b), inner, outer, est)


def invert_two_sided(band: SCBand, c: float) -> tuple[RegionSet, RegionSet]:
    """Upper and lower excursion regions at the same threshold, packaged
    together (outer sets of both directions)."""
    return invert_upper(band, c), invert_lower(band, c)


def invert_levels(band: SCBand, spec: ThresholdSpec) -> list[RegionSet]:
    """Apply the inversion named by ``spec`` to every level, in input order.

    ``two_sided`` emits the upper and lower RegionSet per level, interleaved.
    """
    out: list[RegionSet] = []
    for lv in spec.levels:
        if spec.set_type == "upper":
            out.append(invert_upper(band, lv))
        elif spec.set_type == "lower":
            out.append(invert_lower(band, lv))
        elif spec.set_type == "interval":
            out.append(invert_interval(band, lv[0], lv[1]))
        else:
            out.extend(invert_two_sided(band, lv))
    return out


def true_region(true_mean: np.ndarray, region: RegionSet, domain: Domain) -> np.ndarray:
    """Membership of the true mean in the set that ``region`` targets."""
    t = np.asarray(true_mean, dtype=float)
    if t.shape != domain.shape:
        raise ValueError(f"true_mean shape {t.shape} does not match domain {domain.shape}")
    if region.set_type == "upper":
        member = t >= region.level
    elif region.set_type == "lower":
        member = t <= region.level
    else:
        a, b = region.level
        member = (t >= a) & (t <= b)
    (member,) = _masked(domain, member)
    return member


def check_containment(
    regions: list[RegionSet], true_mean, domain: Domain
) -> ContainmentSummary:
    """Per-level sandwich check inner <= true set <= outer against a known
    true mean; contain_all is the conjunction."""
    flags = []
    for region in regions:
        member = true_region(true_mean, region, domain)
        ok = bool(np.all(member[region.inner]) and np.all(region.outer[member]))
        flags.append(ok)
    return ContainmentSummary(tuple(flags))


# ---------------------------------------------------------------------------
# Region file format
# ---------------------------------------------------------------------------


def regions_to_json(regions: list[RegionSet], domain: Domain) -> str:
    """Serialize RegionSets (one entry per set; a two-sided inversion yields
    interleaved upper/lower entries with repeated levels)."""
    if not regions:
        raise ValueError("no regions to serialize")
    types = {r.set_type for r in regions}
    set_type = regions[0].set_type if len(types) == 1 else "two_sided"
    levels = []
    for r in regions:
        levels.append(list(r.level) if isinstance(r.level, tuple) else r.level)
    doc = {
        "set_type": set_type,
        "set_types": [r.set_type for r in regions],
        "levels": levels,
        "inner": [r.inner.ravel().tolist() for r in regions],
        "outer": [r.outer.ravel().tolist() for r in regions],
        "estimate": [r.estimate.ravel().tolist() for r in regions],
        "shape": list(domain.shape),
    }
    return emit_json(doc)


def regions_from_json(text: str) -> list[RegionSet]:
    import json

    doc = json.loads(text)
    shape = tuple(doc["shape"])
    types = doc.get("set_types") or [doc["set_type"]] * len(doc["levels"])
    out = []
    for i, lv in enumerate(doc["levels"]):
        level = tuple(lv) if isinstance(lv, list) else float(lv)
        out.append(
            RegionSet(
                types[i],
                level,
                np.asarray(doc["inner"][i], dtype=bool).reshape(shape),
                np.asarray(doc["outer"][i], dtype=bool).reshape(shape),
                np.asarray(doc["estimate"][i], dtype=bool).reshape(shape),
            )
        )
    return out
