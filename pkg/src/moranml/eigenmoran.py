"""Moran eigenvectors of the doubly centred weights matrix, exact and Nystrom-approximated.

The centred matrix is ``MCM`` with ``M = I - 11'/n``. Its eigenvectors with
positive eigenvalues are the usual Moran eigenvector candidates; their Moran's I
equals ``n / 1'C1`` times the eigenvalue.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.linalg

from .geometry import PointSet, mst_max_edge, pairwise_distances
from .rng import stream
from .weights import SpatialWeights, exponential_weights

__all__ = [
    "EigenBasis",
    "EigenError",
    "center_weights",
    "moran_eigen_full",
    "moran_eigen_nystrom",
    "nystrom_basis",
    "select_knots",
    "morans_i",
    "save_basis",
    "load_basis",
]

CandidateRule = Literal["top200_positive", "include_negative"]


class EigenError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenBasis:
    vectors: np.ndarray
    values: np.ndarray
    source: Literal["full", "nystrom"]
    candidate_rule: CandidateRule
    requested: int = 0
    dropped: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        vec = np.ascontiguousarray(self.vectors, dtype=float)
        val = np.asarray(self.values, dtype=float)
        if vec.ndim != 2 or val.shape != (vec.shape[1],):
            raise ValueError("vectors must be n x L with L eigenvalues")
        if np.any(np.diff(val) > 0):
            raise ValueError("eigenvalues must be sorted non-increasing")
        vec.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "values", val)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def L(self) -> int:
        return self.vectors.shape[1]

    def check_invariants(self, atol_scale: float = 1e-8) -> None:
        """Raise ``AssertionError`` if centring or orthogonality is violated."""
        n = self.n
        colsums = np.abs(self.vectors.sum(axis=0))
        assert np.all(colsums < atol_scale * np.sqrt(n)), f"column sums up to {colsums.max():.3g}"
        gram = self.vectors.T @ self.vectors
        off = np.abs(gram - np.diag(np.diag(gram)))
        assert np.all(off < atol_scale * n), f"off-diagonal inner products up to {off.max():.3g}"
        if self.candidate_rule == "top200_positive":
            assert np.all(self.values > 0)
            assert self.L <= 200 or self.requested > 200


def _as_matrix(w) -> np.ndarray:
    return w.c if isinstance(w, SpatialWeights) else np.asarray(w, dtype=float)


def center_weights(c: np.ndarray) -> np.ndarray:
    """``(I - 11'/n) C (I - 11'/n)`` without forming M."""
    row = c.mean(axis=1, keepdims=True)
    col = c.mean(axis=0, keepdims=True)
    out = c - row - col + c.mean()
    return 0.5 * (out + out.T)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the first clearly nonzero entry of every column positive."""
    vectors = vectors.copy()
    for k in range(vectors.shape[1]):
        col = vectors[:, k]
        big = np.flatnonzero(np.abs(col) > 1e-8 * np.abs(col).max())
        if big.size and col[big[0]] < 0:
            vectors[:, k] = -col
    return vectors


def _pick(values: np.ndarray, L: int, rule: CandidateRule, tol: float, keep_zero: bool = False) -> np.ndarray:
    """Indices (into ascending ``values``) of the retained eigenpairs, best first."""
    if rule == "top200_positive":
        order = np.flatnonzero(values > tol)[::-1]
        return order[:L]
    if rule == "include_negative":
        nonzero = np.arange(len(values)) if keep_zero else np.flatnonzero(np.abs(values) > tol)
        by_size = nonzero[np.argsort(-np.abs(values[nonzero]), kind="stable")][:L]
        return by_size[np.argsort(-values[by_size], kind="stable")]
    raise ValueError(f"unknown candidate rule {rule!r}")


def _eigh_centred(mcm: np.ndarray):
    """Eigenpairs of ``mcm`` restricted to the complement of the constant vector.

    A Householder reflection ``H`` maps ``e_1`` to ``1/sqrt(n)``; the trailing
    n-1 columns of ``H`` span the centred subspace.
    """
    n = mcm.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    v[0] -= 1.0
    v /= np.linalg.norm(v)
    hm = mcm - 2.0 * np.outer(v, v @ mcm)
    hmh = hm - 2.0 * np.outer(hm @ v, v)
    values, u = scipy.linalg.eigh(0.5 * (hmh[1:, 1:] + hmh[1:, 1:].T), driver="evd")
    full = np.vstack([np.zeros((1, n - 1)), u])
    return values, full - 2.0 * np.outer(v, v @ full)


def moran_eigen_full(w, L: int = 200, rule: CandidateRule = "top200_positive") -> EigenBasis:
    """Exact Moran eigenvectors from a dense symmetric eigensolver.

    Parameters
    ----------
    w : SpatialWeights or ndarray
        Symmetric weights matrix ``C``.
    L : int
        Number of eigenpairs requested. Under ``top200_positive`` fewer are
        returned when ``MCM`` has fewer positive eigenvalues.
    rule : {"top200_positive", "include_negative"}
        ``include_negative`` keeps the L eigenpairs of largest magnitude,
        negative ones included.

    Returns
    -------
    EigenBasis
        Unit-norm, centred, mutually orthogonal columns sorted by decreasing
        eigenvalue; the sign of each column is pinned so that its first
        nonzero entry is positive.
    """
    c = _as_matrix(w)
    n = c.shape[0]
    if c.shape != (n, n):
        raise ValueError("weights must be square")
    if not 1 <= L <= n:
        raise ValueError(f"L must be in [1, {n}], got {L}")
    asym = np.max(np.abs(c - c.T))
    if asym > 1e-10:
        raise ValueError(f"weights matrix is not symmetric (max |C - C'| = {asym:.3g})")
    mcm = center_weights(c)
    deflate = rule == "include_negative" or L >= n
    try:
        if deflate:
            # solve on the complement of 1 so that genuine zero eigenvectors survive
            values, vectors = _eigh_centred(mcm)
        else:
            values, vectors = scipy.linalg.eigh(mcm, subset_by_index=[n - L, n - 1], driver="evr")
    except np.linalg.LinAlgError as exc:
        raise EigenError(f"symmetric eigensolver failed to converge: {exc}") from exc
    tol = 1e-10 * max(np.abs(values).max(), 1e-300)
    pick = _pick(values, L, rule, tol, keep_zero=deflate)
    vec = vectors[:, pick]
    vec = vec - vec.mean(axis=0, keepdims=True)
    vec /= np.linalg.norm(vec, axis=0, keepdims=True)
    return EigenBasis(_fix_signs(vec), values[pick], "full", rule, requested=L)


def moran_eigen_nystrom(
    w_knots: SpatialWeights | np.ndarray,
    cross: np.ndarray,
    L: int,
    rule: CandidateRule = "top200_positive",
    self_weight: float = 1.0,
) -> EigenBasis:
    """Approximate Moran eigenvectors from a knot subsample (one-shot Nystrom).

    Parameters
    ----------
    w_knots : SpatialWeights or ndarray
        m x m weights among the knots (zero diagonal).
    cross : ndarray
        n x m kernel values between every point and every knot. Rows of
        points that are themselves knots hold ``self_weight`` at their own
        column (kernel at zero distance).
    L : int
        Number of eigenpairs wanted, ``L <= m``.
    self_weight : float
        Kernel value at distance zero. The weights matrix is the kernel with
        its diagonal removed, which only shifts centred eigenvalues by this
        amount, so the approximation works on the full kernel.

    Notes
    -----
    The knot kernel ``K_mm`` is eigendecomposed, the cross block lifts its
    eigenvectors to all points, ``G = K_nm U S^-1/2`` (so ``G G'`` is the
    Nystrom approximation of the kernel), then ``G`` is centred and
    re-orthonormalised by an SVD. Columns whose singular values collapse are
    dropped and reported in ``EigenBasis.dropped``.
    """
    c_mm = _as_matrix(w_knots)
    cross = np.asarray(cross, dtype=float)
    m = c_mm.shape[0]
    n = cross.shape[0]
    if cross.shape[1] != m:
        raise ValueError(f"cross block has {cross.shape[1]} columns for {m} knots")
    if m < L:
        raise ValueError(f"need at least L={L} knots, got m={m}")
    k_mm = c_mm + self_weight * np.eye(m)
    k_mm = 0.5 * (k_mm + k_mm.T)
    try:
        s, u = scipy.linalg.eigh(k_mm, driver="evd")
    except np.linalg.LinAlgError as exc:
        raise EigenError(f"knot eigensolver failed: {exc}") from exc
    keep = s > 1e-10 * s.max()
    g = cross @ (u[:, keep] / np.sqrt(s[keep]))
    g -= g.mean(axis=0, keepdims=True)
    q, sv, _ = np.linalg.svd(g, full_matrices=False)
    values = sv**2 - self_weight
    valid = sv**2 > 1e-10 * sv[0] ** 2
    tol = 1e-10 * max(np.abs(values).max(), 1e-300)
    # SVD order is descending; _pick works on ascending values
    pick = len(values) - 1 - _pick(values[::-1], L, rule, tol)
    dropped = tuple(int(p) for p in pick if not valid[p])
    pick = np.array([p for p in pick if valid[p]], dtype=np.int64)
    vec = q[:, pick]
    vals = values[pick]
    vec = vec - vec.mean(axis=0, keepdims=True)
    vec, r = np.linalg.qr(vec)
    flip = np.sign(np.diag(r))
    flip[flip == 0] = 1.0
    vec = vec * flip
    if dropped:
        warnings.warn(f"Nystrom basis: dropped {len(dropped)} rank-deficient columns", stacklevel=2)
    return EigenBasis(_fix_signs(vec), vals, "nystrom", rule, requested=L, dropped=dropped)


def select_knots(ps: PointSet, m: int, seed: int, method: str = "farthest") -> np.ndarray:
    """Sorted indices of ``m`` knot points.

    ``farthest`` starts from a seeded random point and greedily adds the point
    farthest from the current knots (space filling); ``uniform`` draws
    without replacement.
    """
    n = ps.n
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    rng = stream(seed, "knots")
    if method == "uniform":
        return np.sort(rng.choice(n, size=m, replace=False))
    if method != "farthest":
        raise ValueError(f"unknown knot method {method!r}")
    xy = ps.coords
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = int(rng.integers(n))
    mind = np.hypot(*(xy - xy[chosen[0]]).T)
    for k in range(1, m):
        j = int(np.argmax(mind))
        chosen[k] = j
        np.minimum(mind, np.hypot(*(xy - xy[j]).T), out=mind)
    return np.sort(chosen)


def nystrom_basis(
    ps: PointSet,
    L: int = 200,
    m: int = 300,
    seed: int = 0,
    r: float | None = None,
    knots: str = "farthest",
    rule: CandidateRule = "top200_positive",
) -> tuple[EigenBasis, float, np.ndarray]:
    """Exponential-kernel Moran basis via Nystrom.

    ``r`` defaults to the longest MST edge among the knots. Returns the basis,
    the range used, and the knot indices.
    """
    idx = select_knots(ps, m, seed, knots)
    kcoords = ps.coords[idx]
    d_kk = pairwise_distances(kcoords)
    if r is None:
        r = mst_max_edge(d_kk)
    w_knots = exponential_weights(d_kk, r)
    d_nk = np.hypot(
        ps.coords[:, 0][:, None] - kcoords[:, 0][None, :],
        ps.coords[:, 1][:, None] - kcoords[:, 1][None, :],
    )
    cross = np.exp(-d_nk / r)
    return moran_eigen_nystrom(w_knots, cross, L, rule=rule, self_weight=1.0), r, idx


def morans_i(z, w) -> float:
    """Global Moran's I, ``(n / 1'C1) * z~'C z~ / z~'z~`` with ``z~`` mean-centred."""
    c = _as_matrix(w)
    z = np.asarray(z, dtype=float)
    zc = z - z.mean()
    denom = float(zc @ zc)
    if denom <= 1e-300 * max(1.0, float(z @ z)) or np.ptp(z) == 0:
        raise ValueError("Moran's I is undefined for a constant vector")
    total = w.total_weight if isinstance(w, SpatialWeights) else float(c.sum())
    return float(len(z) / total * (zc @ c @ zc) / denom)


def save_basis(basis: EigenBasis, path, ids=None) -> None:
    """CSV: header ``id,lambda_1..lambda_L``, an ``#eigenvalue`` row, then one row per point."""
    ids = ids if ids is not None else [str(i) for i in range(basis.n)]
    buf = io.StringIO()
    buf.write("id," + ",".join(f"lambda_{k + 1}" for k in range(basis.L)) + "\n")
    buf.write("#eigenvalue," + ",".join(repr(float(v)) for v in basis.values) + "\n")
    for pid, row in zip(ids, basis.vectors):
        buf.write(str(pid) + "," + ",".join(repr(float(v)) for v in row) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def load_basis(path, source="full", rule: CandidateRule = "top200_positive") -> tuple[EigenBasis, list[str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    values = np.array([float(v) for v in lines[1].split(",")[1:]])
    ids, rows = [], []
    for line in lines[2:]:
        parts = line.split(",")
        ids.append(parts[0])
        rows.append([float(v) for v in parts[1:]])
    vectors = np.array(rows, dtype=float).reshape(len(ids), len(values))
    return EigenBasis(vectors, values, source, rule, requested=len(values)), ids
