"""Static SVG maps of signed surfaces with a diverging palette anchored at zero."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import PointSet

__all__ = ["render_heatmap", "diverging_color", "WIDTH"]

WIDTH = 480.0
MARGIN = 10.0
LEGEND = 40.0


def diverging_color(t: float) -> tuple[int, int, int]:
    """Blue for ``t < 0``, white at 0, red for ``t > 0``; ``t`` in [-1, 1]."""
    t = float(np.clip(t, -1.0, 1.0))
    if t < 0:
        c = int(round(255 * (1 + t)))
        return c, c, 255
    c = int(round(255 * (1 - t)))
    return 255, c, c


def _layout(coords: np.ndarray, grid_spacing: float | None):
    lo = coords.min(axis=0)
    span = coords.max(axis=0) - lo
    if grid_spacing:
        pad = grid_spacing / 2.0
    elif len(coords) > 1:
        dist, _ = cKDTree(coords).query(coords, k=2)
        nn = float(np.median(dist[:, 1]))
        pad = 0.5 * nn if nn > 0 else 1.0
    else:
        pad = 1.0
    extent = np.maximum(span + 2 * pad, 1e-12)
    scale = (WIDTH - 2 * MARGIN) / extent.max()
    height = extent[1] * scale + 2 * MARGIN
    return lo - pad, scale, height, pad


def render_heatmap(values, points, path, title: str = "") -> Path:
    """Write an SVG map of ``values`` at ``points``.

    Grid point sets are drawn as abutting squares, other point sets as
    fixed-radius circles. Colours scale by ``max|values|`` so zero is always
    white; the legend prints the minimum and maximum.
    """
    values = np.asarray(values, dtype=float).ravel()
    if isinstance(points, PointSet):
        coords = points.coords
        spacing = points.grid.spacing if points.grid is not None else None
    else:
        coords = np.atleast_2d(np.asarray(points, dtype=float))
        spacing = None
    if len(values) != len(coords):
        raise ValueError(f"{len(values)} values for {len(coords)} points")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    origin, scale, height, pad = _layout(coords, spacing)
    vmax = float(np.abs(values).max())
    ts = values / vmax if vmax > 0 else np.zeros_like(values)
    total_h = height + LEGEND
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0f}" height="{total_h:.1f}" '
        f'viewBox="0 0 {WIDTH:.0f} {total_h:.1f}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append('<g id="cells" stroke="none">')
    size = 2 * pad * scale
    for (x, y), t in zip(coords, ts):
        r, g, b = diverging_color(t)
        px = MARGIN + (x - origin[0]) * scale
        py = height - MARGIN - (y - origin[1]) * scale  # y axis up
        if spacing:
            out.append(
                f'<rect x="{px - size / 2:.2f}" y="{py - size / 2:.2f}" width="{size:.2f}" height="{size:.2f}" '
                f'fill="rgb({r},{g},{b})"/>'
            )
        else:
            out.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{0.9 * size / 2:.2f}" fill="rgb({r},{g},{b})"/>')
    out.append("</g>")
    lo, hi = float(values.min()), float(values.max())
    y0 = height + 8
    out.append('<g id="legend" font-family="sans-serif" font-size="12">')
    steps = 11
    bar_w = (WIDTH - 2 * MARGIN - 200) / steps
    for k in range(steps):
        r, g, b = diverging_color(-1 + 2 * k / (steps - 1))
        out.append(
            f'<rect x="{MARGIN + 100 + k * bar_w:.2f}" y="{y0:.1f}" width="{bar_w:.2f}" height="12" fill="rgb({r},{g},{b})"/>'
        )
    out.append(f'<text id="legend-min" x="{MARGIN:.1f}" y="{y0 + 11:.1f}">min={lo:.4g}</text>')
    out.append(f'<text id="legend-max" x="{WIDTH - MARGIN - 90:.1f}" y="{y0 + 11:.1f}">max={hi:.4g}</text>')
    out.append(f'<text x="{MARGIN:.1f}" y="{y0 + 28:.1f}">colour scale: -{vmax:.4g} to +{vmax:.4g}</text>')
    out.append("</g>")
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")
    return path
