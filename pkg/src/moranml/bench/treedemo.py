"""Single trees on coordinates against smooth and checkerboard surfaces.

A tree splitting on coordinates carves space into rectangles, so it tracks a
smooth field better as depth grows, while a checkerboard (strong negative
autocorrelation) cannot be captured with a few hundred leaves.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import make_grid
from ..regressors import fit_tree
from ..rng import stream
from ..synthgen import GrfSpec, sample_grf

__all__ = ["DepthRow", "tree_depth_demo", "save_depth_demo", "DEMO_HEADER"]

DEMO_HEADER = "depth,r2_smooth,r2_mixed,r2_mixed_vs_smooth,r2_mixed_vs_checkerboard"


@dataclass(frozen=True)
class DepthRow:
    depth: int
    r2_smooth: float
    r2_mixed: float
    r2_mixed_vs_smooth: float
    r2_mixed_vs_checkerboard: float


def _r2(y, pred) -> float:
    ss = float(((y - y.mean()) ** 2).sum())
    return 1.0 - float(((y - pred) ** 2).sum()) / ss


def _sq_corr(a, b) -> float:
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1] ** 2)


def demo_surfaces(seed: int, rows: int = 50, cols: int = 50, scale: float = 8.0):
    """Grid points, a smooth GRF surface and a checkerboard of equal standard deviation."""
    ps = make_grid(rows, cols, 1.0)
    smooth = sample_grf(ps, GrfSpec(scale), stream(seed, "demo-surface"))
    r = np.arange(rows * cols) // cols
    c = np.arange(rows * cols) % cols
    checker = np.where((r + c) % 2 == 0, 1.0, -1.0) * smooth.std()
    return ps, smooth, checker


def tree_depth_demo(seed: int = 0, depths=(2, 4, 6, 8), rows: int = 50, cols: int = 50, scale: float = 8.0):
    """Training fit of a single coordinate tree at each depth.

    ``r2_smooth`` is the training R^2 on the smooth surface. For the mixed
    surface (smooth plus checkerboard) ``r2_mixed`` is the training R^2 and
    the component columns are squared correlations between the fitted values
    and each component.
    """
    depths = [int(d) for d in depths]
    if depths != sorted(depths):
        raise ValueError("depths must be ascending")
    ps, smooth, checker = demo_surfaces(seed, rows, cols, scale)
    mixed = smooth + checker
    out = []
    for d in depths:
        fs = fit_tree(ps.coords, smooth, d).predict(ps.coords)
        fm = fit_tree(ps.coords, mixed, d).predict(ps.coords)
        out.append(DepthRow(d, _r2(smooth, fs), _r2(mixed, fm), _sq_corr(fm, smooth), _sq_corr(fm, checker)))
    return out


def save_depth_demo(rows_: list[DepthRow], path) -> None:
    buf = io.StringIO()
    buf.write(DEMO_HEADER + "\n")
    for r in rows_:
        buf.write(
            f"{r.depth},{r.r2_smooth!r},{r.r2_mixed!r},{r.r2_mixed_vs_smooth!r},{r.r2_mixed_vs_checkerboard!r}\n"
        )
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
