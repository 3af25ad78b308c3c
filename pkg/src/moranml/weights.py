"""Queen contiguity and exponential-kernel spatial weights (dense, unstandardized)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .geometry import PointSet

__all__ = ["SpatialWeights", "queen_weights", "exponential_weights", "dump_weights"]


@dataclass(frozen=True)
class SpatialWeights:
    """Symmetric nonnegative n x n weights with zero diagonal.

    Parameters
    ----------
    c : ndarray
        Weight matrix.
    kind : {"queen", "exponential"}
        How the weights were built.
    total_weight : float
        Sum of all entries (1'C1). Checked against ``c`` on construction.
    range_param : float, optional
        Kernel range ``r`` for exponential weights.
    """

    c: np.ndarray
    kind: Literal["queen", "exponential"]
    total_weight: float
    range_param: float | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"weights must be square, got {c.shape}")
        if not np.array_equal(c, c.T):
            raise ValueError("weights must be exactly symmetric")
        if np.any(np.diag(c) != 0):
            raise ValueError("weights must have a zero diagonal")
        if np.any(c < 0):
            raise ValueError("weights must be nonnegative")
        total = float(c.sum())
        if not total > 0:
            raise ValueError("weights have no nonzero entries")
        if not np.isclose(total, self.total_weight, rtol=1e-12, atol=0.0):
            raise ValueError(f"total_weight {self.total_weight} does not match sum {total}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.c.shape[0]


def _grid_pairs(rows: int, cols: int) -> np.ndarray:
    idx = np.arange(rows * cols).reshape(rows, cols)
    pairs = [
        np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()]),  # horizontal
        np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()]),  # vertical
        np.column_stack([idx[:-1, :-1].ravel(), idx[1:, 1:].ravel()]),  # diagonal
        np.column_stack([idx[:-1, 1:].ravel(), idx[1:, :-1].ravel()]),  # anti-diagonal
    ]
    return np.concatenate(pairs)


def queen_weights(ps: PointSet) -> SpatialWeights:
    """Binary Queen contiguity.

    Grids use the 8-neighbourhood template regardless of spacing; other point
    sets must carry explicit adjacency pairs.
    """
    if ps.adjacency is not None:
        pairs = np.array(sorted(ps.adjacency), dtype=np.int64).reshape(-1, 2)
    elif ps.grid is not None:
        pairs = _grid_pairs(ps.grid.rows, ps.grid.cols)
    else:
        raise ValueError(
            "Queen weights need adjacency: supply id_a,id_b pairs in the point file's #adjacency section"
        )
    c = np.zeros((ps.n, ps.n))
    c[pairs[:, 0], pairs[:, 1]] = 1.0
    c[pairs[:, 1], pairs[:, 0]] = 1.0
    return SpatialWeights(c, "queen", float(c.sum()))


def exponential_weights(d: np.ndarray, r: float) -> SpatialWeights:
    """``c_ij = exp(-d_ij / r)`` off the diagonal, zero on it."""
    if not r > 0:
        raise ValueError(f"range r must be positive, got {r}")
    d = np.asarray(d, dtype=float)
    c = np.exp(-d / r)
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 0.0)
    return SpatialWeights(c, "exponential", float(c.sum()), range_param=float(r))


def dump_weights(w: SpatialWeights, path, ids=None) -> None:
    """Write nonzero entries as ``i,j,c_ij`` rows."""
    ii, jj = np.nonzero(w.c)
    labels = ids if ids is not None else [str(i) for i in range(w.n)]
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,j,c_ij\n")
        for i, j in zip(ii, jj):
            fh.write(f"{labels[i]},{labels[j]},{w.c[i, j]!r}\n")
