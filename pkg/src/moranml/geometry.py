"""Spatial supports: regular grids, irregular point sets, distances and MST range."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "PointSet",
    "GridShape",
    "PointFileError",
    "make_grid",
    "load_points",
    "save_points",
    "pairwise_distances",
    "mst_max_edge",
]

ADJACENCY_MARKER = "#adjacency"


class PointFileError(ValueError):
    """Raised when a point CSV file cannot be parsed."""


@dataclass(frozen=True)
class GridShape:
    rows: int
    cols: int
    spacing: float


@dataclass(frozen=True)
class PointSet:
    """Locations with labels and an optional undirected adjacency.

    ``adjacency`` holds index pairs ``(i, j)`` with ``i < j``; each pair stands
    for both directions. ``grid`` is set by :func:`make_grid` so that Queen
    contiguity can be derived without explicit pairs.
    """

    coords: np.ndarray
    ids: tuple[str, ...]
    adjacency: frozenset[tuple[int, int]] | None = None
    grid: GridShape | None = None
    _checked: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must be n x 2, got shape {coords.shape}")
        n = coords.shape[0]
        if n < 1:
            raise ValueError("a point set needs at least one point")
        if len(self.ids) != n:
            raise ValueError(f"{len(self.ids)} ids for {n} points")
        if len(set(self.ids)) != n:
            raise ValueError("point ids must be unique")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        adjacency = self.adjacency
        if adjacency is not None:
            cleaned = set()
            for a, b in adjacency:
                a, b = int(a), int(b)
                if a == b:
                    raise ValueError(f"self-pair ({a}, {a}) in adjacency")
                if not (0 <= a < n and 0 <= b < n):
                    raise ValueError(f"adjacency pair ({a}, {b}) out of range for n={n}")
                cleaned.add((min(a, b), max(a, b)))
            adjacency = frozenset(cleaned)
        elif n > 1:
            uniq = np.unique(coords, axis=0)
            if uniq.shape[0] != n:
                raise ValueError("duplicate coordinates require an explicit adjacency")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "adjacency", adjacency)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def subset(self, index) -> PointSet:
        """Point set restricted to ``index`` (adjacency and grid info dropped)."""
        index = np.asarray(index)
        return PointSet(self.coords[index], tuple(self.ids[i] for i in index))


def make_grid(rows: int, cols: int, spacing: float = 1.0) -> PointSet:
    """Regular lattice with points at ``(col * spacing, row * spacing)``, row-major."""
    if int(rows) != rows or int(cols) != cols or rows <= 0 or cols <= 0:
        raise ValueError(f"grid dimensions must be positive integers, got {rows}x{cols}")
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    rows, cols = int(rows), int(cols)
    if rows * cols < 4:
        raise ValueError("a grid needs at least 4 points")
    r, c = np.divmod(np.arange(rows * cols), cols)
    coords = np.column_stack([c * float(spacing), r * float(spacing)])
    ids = tuple(str(i) for i in range(rows * cols))
    return PointSet(coords, ids, grid=GridShape(rows, cols, float(spacing)))


def load_points(path) -> PointSet:
    """Read a point CSV: ``id,x,y`` rows, then optionally ``#adjacency`` and ``id_a,id_b`` rows."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_points(text, source=str(path))


def parse_points(text: str, source: str = "<string>") -> PointSet:
    lines = text.split("\n")
    if not lines or lines[0].strip().lstrip("﻿") != "id,x,y":
        raise PointFileError(f"{source}:1: expected header 'id,x,y'")
    ids: list[str] = []
    xy: list[tuple[float, float]] = []
    index: dict[str, int] = {}
    pairs: list[tuple[int, int]] | None = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.strip() == ADJACENCY_MARKER:
            if pairs is not None:
                raise PointFileError(f"{source}:{lineno}: repeated {ADJACENCY_MARKER} section")
            pairs = []
            continue
        row = next(csv.reader([line]))
        if pairs is None:
            if len(row) != 3:
                raise PointFileError(f"{source}:{lineno}: expected 3 fields, got {len(row)}")
            pid = row[0].strip()
            if pid in index:
                raise PointFileError(f"{source}:{lineno}: duplicate id {pid!r}")
            try:
                x, y = float(row[1]), float(row[2])
            except ValueError:
                raise PointFileError(f"{source}:{lineno}: non-numeric coordinate") from None
            index[pid] = len(ids)
            ids.append(pid)
            xy.append((x, y))
        else:
            if len(row) != 2:
                raise PointFileError(f"{source}:{lineno}: expected 2 fields in adjacency row")
            a, b = row[0].strip(), row[1].strip()
            if (a, b) == ("id_a", "id_b"):
                continue
            for pid in (a, b):
                if pid not in index:
                    raise PointFileError(f"{source}:{lineno}: adjacency references unknown id {pid!r}")
            if a == b:
                raise PointFileError(f"{source}:{lineno}: self-adjacency for id {a!r}")
            pairs.append((index[a], index[b]))
    if not ids:
        raise PointFileError(f"{source}: no points")
    adjacency = frozenset(pairs) if pairs is not None else None
    try:
        return PointSet(np.array(xy, dtype=float), tuple(ids), adjacency=adjacency)
    except ValueError as exc:
        raise PointFileError(f"{source}: {exc}") from None


def save_points(ps: PointSet, path) -> None:
    """Write ``ps`` in the point CSV format; coordinates use round-trip ``repr``."""
    buf = io.StringIO()
    buf.write("id,x,y\n")
    for pid, (x, y) in zip(ps.ids, ps.coords):
        buf.write(f"{pid},{float(x)!r},{float(y)!r}\n")
    if ps.adjacency is not None:
        buf.write(ADJACENCY_MARKER + "\n")
        for a, b in sorted(ps.adjacency):
            buf.write(f"{ps.ids[a]},{ps.ids[b]}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def pairwise_distances(ps: PointSet | np.ndarray) -> np.ndarray:
    """Dense Euclidean distance matrix (symmetric, exact zero diagonal)."""
    coords = ps.coords if isinstance(ps, PointSet) else np.asarray(ps, dtype=float)
    # explicit differences rather than the Gram trick, which loses precision for close points
    dx = coords[:, 0][:, None] - coords[:, 0][None, :]
    dy = coords[:, 1][:, None] - coords[:, 1][None, :]
    d = np.hypot(dx, dy)
    np.fill_diagonal(d, 0.0)
    return d


def mst_max_edge(d: np.ndarray) -> float:
    """Longest edge of the minimum spanning tree over a dense distance matrix (Prim, O(n^2))."""
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if n < 2:
        raise ValueError("MST needs at least two points")
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = d[0].copy()
    best[0] = np.inf
    longest = 0.0
    for _ in range(n - 1):
        j = int(np.argmin(best))
        longest = max(longest, float(best[j]))
        in_tree[j] = True
        best[j] = np.inf
        np.minimum(best, np.where(in_tree, np.inf, d[j]), out=best)
    return longest
