"""GeoShapley decomposition with a joint location player.

A prediction is split as::

    f(x) = phi0 + phi_geo + sum_j phi_j + sum_j phi_geo_j

where every spatial input column (coordinates or eigenvectors) is toggled as
one player ``GEO``. ``phi_geo_j`` is the full pairwise Shapley interaction
between ``GEO`` and feature ``j``; half of it is taken from each of the two
main effects so the parts add up exactly. Interactions among non-spatial
features stay inside their main effects.

Coalition values are interventional: columns outside the coalition are
replaced by each background row in turn and predictions are averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..rng import stream

__all__ = [
    "PlayerPartition",
    "GeoShapleyExplanation",
    "ValueFunction",
    "value_function",
    "sample_background",
    "explain_exact",
    "explain_sampled",
    "shapley_from_values",
    "MAX_EXACT_PLAYERS",
    "SingularDesignError",
]

MAX_EXACT_PLAYERS = 12
_BATCH_ROWS = 50_000


class SingularDesignError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class PlayerPartition:
    """Model input columns grouped into players.

    Player 0 is ``GEO`` (all ``geo_columns`` at once) when there are spatial
    columns; each entry of ``feature_players`` is a single column.
    """

    geo_columns: tuple[int, ...]
    feature_players: tuple[int, ...]
    n_columns: int | None = None

    def __post_init__(self):
        geo = tuple(int(c) for c in self.geo_columns)
        feats = tuple(int(c) for c in self.feature_players)
        object.__setattr__(self, "geo_columns", geo)
        object.__setattr__(self, "feature_players", feats)
        cols = geo + feats
        if len(set(cols)) != len(cols):
            raise ValueError("players must not share columns")
        m = len(cols) if self.n_columns is None else self.n_columns
        object.__setattr__(self, "n_columns", m)
        if sorted(cols) != list(range(m)):
            raise ValueError(f"players must cover columns 0..{m - 1} exactly once")
        if not feats:
            raise ValueError("need at least one feature player")

    @classmethod
    def from_bundle(cls, fb) -> "PlayerPartition":
        k = fb.n_nonspatial
        return cls(tuple(fb.spatial_columns), tuple(range(k)), k + len(fb.spatial_columns))

    @property
    def has_geo(self) -> bool:
        return len(self.geo_columns) > 0

    @property
    def players(self) -> list[tuple[int, ...]]:
        out = [self.geo_columns] if self.has_geo else []
        return out + [(c,) for c in self.feature_players]

    @property
    def q(self) -> int:
        return len(self.players)

    @property
    def p(self) -> int:
        return len(self.feature_players)

    def column_mask(self, coalition: int) -> np.ndarray:
        """Boolean mask over columns for a coalition bitmask over players."""
        mask = np.zeros(self.n_columns, dtype=bool)
        for k, cols in enumerate(self.players):
            if coalition >> k & 1:
                mask[list(cols)] = True
        return mask


@dataclass
class GeoShapleyExplanation:
    phi0: float
    phi_geo: np.ndarray
    phi_j: np.ndarray
    phi_geo_j: np.ndarray
    background: np.ndarray
    prediction: np.ndarray
    estimator: str = "exact"
    svc: np.ndarray | None = field(default=None)

    def total(self) -> np.ndarray:
        return self.phi0 + self.phi_geo + self.phi_j.sum(axis=1) + self.phi_geo_j.sum(axis=1)

    def additivity_error(self) -> float:
        return float(np.max(np.abs(self.total() - self.prediction)))


def sample_background(X, g: int = 100, seed: int = 0) -> np.ndarray:
    """``min(n, g)`` rows drawn uniformly without replacement, in their original order."""
    X = np.asarray(X, float)
    g = min(len(X), g)
    idx = np.sort(stream(seed, "background").choice(len(X), size=g, replace=False))
    return X[idx]


class ValueFunction:
    """Interventional coalition values ``v(S, x)`` for a fitted model."""

    def __init__(self, model, background, partition: PlayerPartition):
        background = np.asarray(background, float)
        if background.ndim != 2 or len(background) == 0:
            raise ValueError("background must be a non-empty 2-D array")
        if background.shape[1] != partition.n_columns:
            raise ValueError(
                f"background has {background.shape[1]} columns, partition covers {partition.n_columns}"
            )
        self.model = model
        self.background = background
        self.partition = partition
        self.empty_value = float(np.mean(model.predict(background)))

    def __call__(self, coalition: int, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, float))
        if rows.shape[1] != self.partition.n_columns:
            raise ValueError(f"rows have {rows.shape[1]} columns, expected {self.partition.n_columns}")
        full = (1 << self.partition.q) - 1
        if coalition == 0:
            return np.full(len(rows), self.empty_value)
        if coalition == full:
            return np.asarray(self.model.predict(rows), float)
        mask = self.partition.column_mask(coalition)
        g = len(self.background)
        per_batch = max(1, _BATCH_ROWS // g)
        out = np.empty(len(rows))
        for start in range(0, len(rows), per_batch):
            chunk = rows[start : start + per_batch]
            comp = np.repeat(self.background[None, :, :], len(chunk), axis=0)
            comp[:, :, mask] = chunk[:, None, mask]
            pred = np.asarray(self.model.predict(comp.reshape(-1, comp.shape[2])), float)
            out[start : start + len(chunk)] = pred.reshape(len(chunk), g).mean(axis=1)
        return out

    def table(self, rows, coalitions) -> np.ndarray:
        """Values for each coalition as columns, shape (n_rows, len(coalitions))."""
        return np.column_stack([self(int(c), rows) for c in coalitions])


def value_function(model, background, partition: PlayerPartition) -> ValueFunction:
    return ValueFunction(model, background, partition)


def _popcount(x: int) -> int:
    return bin(x).count("1")


def shapley_from_values(V: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Shapley values and pairwise interaction indices from a full value table.

    ``V[:, S]`` holds v(S) for every bitmask ``S``. Returns ``(sh, inter)``
    with ``sh`` of shape (n, q) and ``inter`` of shape (n, q, q), where
    ``inter[:, i, j]`` is the Shapley interaction index of ``i`` and ``j``.
    """
    n = V.shape[0]
    full = (1 << q) - 1
    fact = [math.factorial(k) for k in range(q + 1)]
    sh = np.zeros((n, q))
    for i in range(q):
        bit = 1 << i
        for S in range(full + 1):
            if S & bit:
                continue
            s = _popcount(S)
            sh[:, i] += fact[s] * fact[q - s - 1] / fact[q] * (V[:, S | bit] - V[:, S])
    inter = np.zeros((n, q, q))
    for i, j in combinations(range(q), 2):
        bi, bj = 1 << i, 1 << j
        acc = np.zeros(n)
        for S in range(full + 1):
            if S & (bi | bj):
                continue
            s = _popcount(S)
            w = fact[s] * fact[q - s - 2] / fact[q - 1]
            acc += w * (V[:, S | bi | bj] - V[:, S | bi] - V[:, S | bj] + V[:, S])
        inter[:, i, j] = inter[:, j, i] = acc
    return sh, inter


def _assemble(partition, phi0, sh, inter, pred, background, estimator) -> GeoShapleyExplanation:
    n = sh.shape[0]
    if partition.has_geo:
        geo_j = inter[:, 0, 1:]
        phi_j = sh[:, 1:] - 0.5 * geo_j
        phi_geo = sh[:, 0] - 0.5 * geo_j.sum(axis=1)
    else:
        geo_j = np.zeros((n, partition.p))
        phi_j = sh
        phi_geo = np.zeros(n)
    return GeoShapleyExplanation(float(phi0), phi_geo, phi_j, geo_j, background, pred, estimator)


def explain_exact(model, rows, background, partition: PlayerPartition) -> GeoShapleyExplanation:
    """Exact GeoShapley by enumerating all ``2**q`` coalitions for every row."""
    q = partition.q
    if q > MAX_EXACT_PLAYERS:
        raise ValueError(f"{q} players exceed the exact limit of {MAX_EXACT_PLAYERS}; use explain_sampled")
    vf = value_function(model, background, partition)
    rows = np.atleast_2d(np.asarray(rows, float))
    V = vf.table(rows, range(1 << q))
    sh, inter = shapley_from_values(V, q)
    return _assemble(partition, vf.empty_value, sh, inter, V[:, -1], vf.background, "exact")


def _kernel_weight(q: int, s: int) -> float:
    return (q - 1) / (math.comb(q, s) * s * (q - s))


def _sample_coalitions(q: int, budget: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Paired coalition sample from the Shapley kernel; returns (bitmasks, weights)."""
    rng = stream(seed, "coalitions")
    sizes = np.arange(1, q)
    p_size = (q - 1) / (sizes * (q - sizes))
    p_size /= p_size.sum()
    counts: dict[int, float] = {}
    full = (1 << q) - 1
    for _ in range((budget - 2) // 2):
        s = int(rng.choice(sizes, p=p_size))
        members = rng.choice(q, size=s, replace=False)
        S = int(sum(1 << int(m) for m in members))
        for c in (S, full ^ S):
            counts[c] = counts.get(c, 0.0) + 1.0
    masks = np.array(sorted(counts), dtype=np.int64)
    return masks, np.array([counts[m] for m in masks])


def _basis(masks: np.ndarray, terms: list[int]) -> np.ndarray:
    """Unanimity basis: column ``t`` is 1 where the coalition contains every player of ``terms[t]``."""
    return np.array([[1.0 if (m & t) == t else 0.0 for t in terms] for m in masks])


def explain_sampled(
    model, rows, background, partition: PlayerPartition, budget: int, seed: int = 0
) -> GeoShapleyExplanation:
    """Kernel-SHAP style GeoShapley estimate.

    Coalition values are regressed, with Shapley-kernel weights and the
    efficiency constraint ``sum(coef) = f(x) - phi0``, on a unanimity basis of
    main effects plus ``GEO x j`` products; their coefficients are read off as
    ``phi_geo``, ``phi_j`` and ``phi_geo_j``. One seeded coalition sample is
    shared by every row. A budget of at least ``2**q`` enumerates every
    coalition and fits the complete basis, which reproduces the exact result.
    """
    q = partition.q
    if budget < 2 * q + 2:
        raise ValueError(f"budget must be at least 2q + 2 = {2 * q + 2}, got {budget}")
    vf = value_function(model, background, partition)
    rows = np.atleast_2d(np.asarray(rows, float))
    full = (1 << q) - 1
    phi0 = vf.empty_value
    pred = vf(full, rows)
    if budget >= 1 << q:
        masks = np.arange(1, full, dtype=np.int64)
        weights = np.array([_kernel_weight(q, _popcount(int(m))) for m in masks])
        terms = list(range(1, full + 1))
    else:
        masks, weights = _sample_coalitions(q, budget, seed)
        terms = [1 << k for k in range(q)]
        if partition.has_geo:
            terms += [1 | 1 << k for k in range(1, q)]
    B = _basis(masks, terms)
    r = len(terms)
    kkt = np.zeros((r + 1, r + 1))
    kkt[:r, :r] = B.T @ (weights[:, None] * B)
    kkt[:r, r] = kkt[r, :r] = 1.0
    if np.linalg.matrix_rank(kkt) < r + 1:
        raise SingularDesignError(
            f"coalition design is singular with budget {budget}; increase the budget"
        )
    Y = vf.table(rows, masks) - phi0
    rhs = np.zeros((r + 1, len(rows)))
    rhs[:r] = B.T @ (weights[:, None] * Y.T)
    rhs[r] = pred - phi0
    coef = np.linalg.solve(kkt, rhs)[:r].T
    if budget >= 1 << q:
        sizes = np.array([_popcount(t) for t in terms], dtype=float)
        sh = np.zeros((len(rows), q))
        inter = np.zeros((len(rows), q, q))
        for c, (t, s) in enumerate(zip(terms, sizes)):
            for i in range(q):
                if t >> i & 1:
                    sh[:, i] += coef[:, c] / s
                    for j in range(i + 1, q):
                        if t >> j & 1:
                            inter[:, i, j] += coef[:, c] / (s - 1)
                            inter[:, j, i] = inter[:, i, j]
        out = _assemble(partition, phi0, sh, inter, pred, vf.background, "sampled")
        return out
    main = coef[:, :q]
    if partition.has_geo:
        geo_j = coef[:, q:]
        phi_geo, phi_j = main[:, 0], main[:, 1:]
    else:
        geo_j = np.zeros((len(rows), partition.p))
        phi_geo, phi_j = np.zeros(len(rows)), main
    return GeoShapleyExplanation(float(phi0), phi_geo, phi_j, geo_j, vf.background, pred, "sampled")
