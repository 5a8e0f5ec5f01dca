"""Band and contour plots as deterministic SVG.

1D bands render as a gray polygon with the estimate curve in black and, per
threshold, horizontal segments at the threshold height: blue where only the
outer region holds, yellow where the point estimate holds, red where the
inner region holds. 2D bands render as a heat field of the estimate with
per-level contour lines: blue = outer boundary, green = estimate boundary,
red = inner boundary. SVGs are byte-reproducible: no library backends, fixed
float formatting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SCBand

__all__ = ["PlotSpec", "marching_squares", "render_band_svg", "render_band_files"]

PALETTES = {
    # ColorBrewer 11-class Spectral ramp
    "Spectral": [
        "#9e0142", "#d53e4f", "#f46d43", "#fdae61", "#fee08b", "#ffffbf",
        "#e6f598", "#abdda4", "#66c2a5", "#3288bd", "#5e4fa2",
    ],
    "viridis": [
        "#440154", "#482878", "#3e4989", "#31688e", "#26828e", "#1f9e89",
        "#35b779", "#6ece58", "#b5de2b", "#fde725",
    ],
    "gray": ["#f7f7f7", "#252525"],
}

INNER_COLOR = "#d62728"  # red
ESTIMATE_1D_COLOR = "#e6c800"  # yellow
OUTER_COLOR = "#1f77b4"  # blue
ESTIMATE_2D_COLOR = "#2ca02c"  # green


@dataclass(frozen=True)
class PlotSpec:
    """Rendering options for band/contour plots."""

    levels: tuple
    set_type: str = "upper"
    together: bool = True
    xlab: str = ""
    ylab: str = ""
    palette: str = "Spectral"
    level_label: bool = True
    min_size: int = 0
    label_color: str = "black"
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if len(self.levels) == 0:
            raise ValueError("levels must be nonempty")
        if self.min_size < 0:
            raise ValueError("min_size must be nonnegative")
        if self.palette not in PALETTES:
            raise ValueError(f"unknown palette {self.palette!r}; "
                             f"choose one of {sorted(PALETTES)}")
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))


# ---------------------------------------------------------------------------
# Marching squares
# ---------------------------------------------------------------------------

# Cell-edge ids: 0 bottom (i,j)-(i+1,j), 1 right, 2 top, 3 left, with i along
# axis 0 and j along axis 1. For each of the 16 corner-sign cases, the pairs
# of edges crossed by the level set.
_CASE_EDGES = {
    0: [], 15: [],
    1: [(3, 0)], 14: [(3, 0)],
    2: [(0, 1)], 13: [(0, 1)],
    4: [(1, 2)], 11: [(1, 2)],
    8: [(2, 3)], 7: [(2, 3)],
    3: [(3, 1)], 12: [(3, 1)],
    6: [(0, 2)], 9: [(0, 2)],
    # saddles resolved by the caller via the cell average
    5: None, 10: None,
}


def _edge_key(i, j, edge):
    # canonical (node, axis) key so shared edges interpolate once
    if edge == 0:
        return (i, j, 0)
    if edge == 1:
        return (i + 1, j, 1)
    if edge == 2:
        return (i, j + 1, 0)
    return (i, j, 1)


def marching_squares(fieldvals, level: float, mask=None):
    """Extract level-set polylines from a 2D field by marching squares.

    Linear interpolation along cell edges; the two ambiguous (saddle) cases
    are resolved by comparing the cell average to the level. Cells touching a
    masked node emit nothing. Segments are joined into maximal chains; output
    points are (axis0, axis1) index coordinates.
    """
    F = np.asarray(fieldvals, dtype=float)
    if F.ndim != 2:
        raise ValueError("field must be 2-D")
    n1, n2 = F.shape
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != F.shape:
            raise ValueError("mask shape mismatch")
    level = float(level)

    def interp(i, j, axis):
        if axis == 0:
            f0, f1 = F[i, j], F[i + 1, j]
            t = 0.5 if f1 == f0 else (level - f0) / (f1 - f0)
            return (i + t, float(j))
        f0, f1 = F[i, j], F[i, j + 1]
        t = 0.5 if f1 == f0 else (level - f0) / (f1 - f0)
        return (float(i), j + t)

    segments = []  # pairs of edge keys
    points = {}
    for i in range(n1 - 1):
        for j in range(n2 - 1):
            if mask is not None and not (
                mask[i, j] and mask[i + 1, j] and mask[i, j + 1] and mask[i + 1, j + 1]
            ):
                continue
            corners = (F[i, j], F[i + 1, j], F[i + 1, j + 1], F[i, j + 1])
            if not all(np.isfinite(corners)):
                continue
            case = (
                (corners[0] >= level)
                | ((corners[1] >= level) << 1)
                | ((corners[2] >= level) << 2)
                | ((corners[3] >= level) << 3)
            )
            edges = _CASE_EDGES[int(case)]
            if edges is None:
                # saddle: the cell average decides whether the two inside
                # corners connect through the center
                center_in = sum(corners) / 4.0 >= level
                if int(case) == 5:  # corners 0 and 2 inside
                    edges = [(0, 1), (2, 3)] if center_in else [(3, 0), (1, 2)]
                else:  # corners 1 and 3 inside
                    edges = [(3, 0), (1, 2)] if center_in else [(0, 1), (2, 3)]
            for e0, e1 in edges:
                keys = []
                for e in (e0, e1):
                    key = _edge_key(i, j, e)
                    if key not in points:
                        points[key] = interp(key[0], key[1], key[2])
                    keys.append(key)
                segments.append((keys[0], keys[1]))

    return _join_chains(segments, points)


def _join_chains(segments, points):
    """Join segments sharing edge keys into maximal polylines."""
    if not segments:
        return []
    adj = {}
    for a, b in segments:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    unused = {seg: True for seg in segments}
    seg_at = {}
    for seg in segments:
        a, b = seg
        seg_at.setdefault(a, []).append(seg)
        seg_at.setdefault(b, []).append(seg)

    def take_from(key):
        for seg in seg_at.get(key, []):
            if unused.get(seg):
                unused[seg] = False
                return seg[1] if seg[0] == key else seg[0]
        return None

    chains = []
    for seg in segments:
        if not unused.get(seg):
            continue
        unused[seg] = False
        chain = [seg[0], seg[1]]
        # extend forward
        while True:
            nxt = take_from(chain[-1])
            if nxt is None:
                break
            chain.append(nxt)
        # extend backward
        while True:
            prv = take_from(chain[0])
            if prv is None:
                break
            chain.insert(0, prv)
        chains.append([points[k] for k in chain])
    return chains


# ---------------------------------------------------------------------------
# SVG rendering
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".2f")


class _Svg:
    def __init__(self, width, height):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">'
        ]

    def rect(self, x, y, w, h, fill, opacity=None):
        op = f' fill-opacity="{opacity}"' if opacity is not None else ""
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{fill}"{op}/>'
        )

    def polygon(self, pts, fill, opacity=None):
        op = f' fill-opacity="{opacity}"' if opacity is not None else ""
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(f'<polygon points="{coords}" fill="{fill}"{op}/>')

    def polyline(self, pts, stroke, width=1.5):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}"/>'
        )

    def line(self, x0, y0, x1, y1, stroke, width=3.0):
        self.parts.append(
            f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y1)}" '
            f'stroke="{stroke}" stroke-width="{width}"/>'
        )

    def text(self, x, y, content, fill="black", size=11, anchor="middle"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-family="sans-serif" '
            f'font-size="{size}" fill="{fill}" text-anchor="{anchor}">{content}</text>'
        )

    def tostring(self) -> str:
        return "".join(self.parts) + "</svg>"


_MARGIN = 46.0


def _scale(lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0

    def f(v):
        return out_lo + (v - lo) / span * (out_hi - out_lo)

    return f


def _palette_color(palette, t):
    stops = PALETTES[palette]
    pos = t * (len(stops) - 1)
    k = int(np.clip(np.floor(pos), 0, len(stops) - 2))
    frac = pos - k

    def hex2rgb(h):
        return tuple(int(h[i:i + 2], 16) for i in (1, 3, 5))

    c0, c1 = hex2rgb(stops[k]), hex2rgb(stops[k + 1])
    rgb = tuple(round(a + (b - a) * frac) for a, b in zip(c0, c1))
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


def _segments_from_bools(include):
    """Contiguous True runs as (start, stop) index pairs (stop inclusive)."""
    runs = []
    start = None
    for i, flag in enumerate(include):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(include) - 1))
    return runs


def _region_masks(band: SCBand, level: float, set_type: str):
    m = band.domain.mask_array()
    if set_type == "upper":
        inner = (band.scb_low >= level) & m
        outer = (band.scb_up >= level) & m
        est = (band.eta_hat >= level) & m
    elif set_type == "lower":
        inner = (band.scb_up <= level) & m
        outer = (band.scb_low <= level) & m
        est = (band.eta_hat <= level) & m
    else:
        raise ValueError(f"plots support set types 'upper' and 'lower', not {set_type!r}")
    return inner, est, outer


def _render_1d(band: SCBand, spec: PlotSpec, levels) -> str:
    x = band.domain.coords1
    if band.domain.kind == "discrete":
        x = np.arange(len(band.domain.labels), dtype=float)
    w, h = spec.width, spec.height
    finite = np.concatenate([band.scb_low, band.scb_up, np.asarray(levels, dtype=float)])
    finite = finite[np.isfinite(finite)]
    ylo, yhi = float(finite.min()), float(finite.max())
    pad = 0.05 * (yhi - ylo if yhi > ylo else 1.0)
    sx = _scale(float(x[0]), float(x[-1]) if x.size > 1 else float(x[0]) + 1.0,
                _MARGIN, w - _MARGIN / 2)
    sy = _scale(ylo - pad, yhi + pad, h - _MARGIN, _MARGIN / 2)
    svg = _Svg(w, h)
    svg.rect(0, 0, w, h, "#ffffff")
    # gray band polygon and estimate curve, split at masked cells
    m = band.domain.mask_array()
    for a, b in _segments_from_bools(m.tolist()):
        xs = x[a:b + 1]
        upper_pts = [(sx(xi), sy(v)) for xi, v in zip(xs, band.scb_up[a:b + 1])]
        lower_pts = [(sx(xi), sy(v)) for xi, v in zip(xs, band.scb_low[a:b + 1])][::-1]
        svg.polygon(upper_pts + lower_pts, "#bbbbbb", opacity="0.7")
        svg.polyline(
            [(sx(xi), sy(v)) for xi, v in zip(xs, band.eta_hat[a:b + 1])],
            "#000000", 1.8,
        )
    for level in levels:
        inner, est, outer = _region_masks(band, level, spec.set_type)
        ylevel = sy(level)
        layers = (
            (outer, OUTER_COLOR),
            (est, ESTIMATE_1D_COLOR),
            (inner, INNER_COLOR),
        )
        for include, color in layers:
            for a, b in _segments_from_bools(include.tolist()):
                svg.line(sx(x[a]), ylevel, sx(x[b]), ylevel, color)
        if spec.level_label:
            svg.text(w - _MARGIN / 4, ylevel - 3, f"{level:g}",
                     fill=spec.label_color, anchor="end")
    svg.text(w / 2, h - 10, spec.xlab or "", anchor="middle")
    svg.text(14, h / 2, spec.ylab or "", anchor="middle")
    return svg.tostring()


def _render_2d(band: SCBand, spec: PlotSpec, levels) -> str:
    if band.domain.kind != "grid2d":
        raise ValueError("2D plots need a grid2d domain")
    x1 = band.domain.coords1
    x2 = band.domain.coords2
    mask = band.domain.mask_array()
    w, h = spec.width, spec.height
    sx = _scale(float(x1[0]), float(x1[-1]), _MARGIN, w - _MARGIN / 2)
    sy = _scale(float(x2[0]), float(x2[-1]), h - _MARGIN, _MARGIN / 2)
    svg = _Svg(w, h)
    svg.rect(0, 0, w, h, "#ffffff")
    vals = band.eta_hat[mask]
    vlo, vhi = float(vals.min()), float(vals.max())
    span = vhi - vlo if vhi > vlo else 1.0
    # heat field: one rect per unmasked grid cell
    dx = (sx(x1[-1]) - sx(x1[0])) / max(x1.size - 1, 1)
    dy = (sy(x2[0]) - sy(x2[-1])) / max(x2.size - 1, 1)
    for i in range(x1.size):
        for j in range(x2.size):
            if not mask[i, j]:
                continue
            t = (band.eta_hat[i, j] - vlo) / span
            svg.rect(sx(x1[i]) - dx / 2, sy(x2[j]) - dy / 2, dx, dy,
                     _palette_color(spec.palette, t))

    def draw_contours(fieldvals, level, color):
        chains = marching_squares(fieldvals, level, mask)
        best = None
        for chain in chains:
            pts = [(sx(np.interp(a, np.arange(x1.size), x1)),
                    sy(np.interp(b, np.arange(x2.size), x2))) for a, b in chain]
            svg.polyline(pts, color, 2.0)
            if best is None or len(chain) > len(best):
                best = pts
        return best

    for level in levels:
        if spec.set_type == "upper":
            surfaces = (
                (band.scb_up, OUTER_COLOR),
                (band.eta_hat, ESTIMATE_2D_COLOR),
                (band.scb_low, INNER_COLOR),
            )
        else:
            surfaces = (
                (band.scb_low, OUTER_COLOR),
                (band.eta_hat, ESTIMATE_2D_COLOR),
                (band.scb_up, INNER_COLOR),
            )
        longest = None
        for fieldvals, color in surfaces:
            best = draw_contours(np.nan_to_num(fieldvals, nan=0.0), level, color)
            if fieldvals is band.eta_hat:
                longest = best
        if spec.level_label and longest is not None and len(longest) >= spec.min_size:
            mx, my = longest[len(longest) // 2]
            svg.text(mx, my, f"{level:g}", fill=spec.label_color)
    svg.text(w / 2, h - 10, spec.xlab or "", anchor="middle")
    svg.text(14, h / 2, spec.ylab or "", anchor="middle")
    return svg.tostring()


def render_band_svg(band: SCBand, spec: PlotSpec, levels=None) -> str:
    """Render one SVG panel with all requested levels."""
    band.validate()
    levels = spec.levels if levels is None else levels
    if band.domain.kind == "grid2d":
        return _render_2d(band, spec, levels)
    return _render_1d(band, spec, levels)


def render_band_files(band: SCBand, spec: PlotSpec, out_path: str) -> list[str]:
    """Write the plot to disk: one file when ``together``, else one file per
    level suffixed ``_L<k>``. Returns the paths written."""
    paths = []
    if spec.together:
        with open(out_path, "w") as fh:
            fh.write(render_band_svg(band, spec))
        paths.append(out_path)
        return paths
    stem, dot, suffix = out_path.rpartition(".")
    if not dot:
        stem, suffix = out_path, "svg"
    for k, level in enumerate(spec.levels, start=1):
        path = f"{stem}_L{k}.{suffix}"
        with open(path, "w") as fh:
            fh.write(render_band_svg(band, spec, levels=(level,)))
        paths.append(path)
    return paths
