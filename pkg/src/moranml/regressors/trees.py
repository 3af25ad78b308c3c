"""CART regression trees with bagging and gradient-boosting ensembles.

Trees grow level by level. Each feature is presorted once per fit; a level is
grown with one pass over every presorted column, accumulating left-hand
weight and weighted target sums per open node, so split search costs
O(n * p) per level. Splits maximise the reduction in weighted squared error;
ties keep the lowest feature index, then the lowest threshold.

Sample weights carry bootstrap counts (bagging) and row subsampling
(boosting); rows with zero weight still follow the tree so their predictions
are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from ..rng import child_seed, stream
from .base import PredictorModel

__all__ = ["TreeEnsemble", "fit_tree_ensemble", "fit_tree", "validate_tree_hp", "TREE_DEFAULTS"]

UNLIMITED_DEPTH = 1_000_000

TREE_DEFAULTS = {
    "bagging": {
        "n_estimators": 200,
        "max_depth": 12,
        "min_samples_leaf": 1,
        "max_features": 1.0 / 3.0,
        "bootstrap": True,
    },
    "boosting": {
        "n_estimators": 300,
        "max_depth": 5,
        "learning_rate": 0.1,
        "min_samples_leaf": 5,
        "subsample": 0.8,
        "max_features": 1.0,
        "n_iter_no_change": None,
        "validation_fraction": 0.1,
    },
}


@numba.njit(cache=True, inline="always")
def _splitmix(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _grow(xt, order, xsorted, y, w, max_depth, min_leaf, mtry, seed):
    """Grow one tree.

    ``xt`` is features-major (p, n); ``order[f]`` sorts column ``f`` ascending
    and ``xsorted[f]`` holds the sorted values.
    Returns node arrays trimmed to size and the leaf reached by every row.
    """
    p, n = xt.shape
    wsum = 0.0
    for i in range(n):
        wsum += w[i]
    cap = 2 * int(wsum + 1.0) + 1
    if max_depth < 30:
        cap = min(cap, 2 ** (max_depth + 1) - 1)
    cap = max(cap, 1)
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    val = np.zeros(cap)
    nw = np.zeros(cap)
    ns = np.zeros(cap)
    nq = np.zeros(cap)
    node_of = np.zeros(n, np.int64)
    stat = np.empty((n, 3))
    for i in range(n):
        stat[i, 0] = w[i]
        stat[i, 1] = w[i] * y[i]
        stat[i, 2] = w[i] * y[i] * y[i]
    slot_row = np.empty(n, np.int64)
    s0 = 0.0
    q0 = 0.0
    for i in range(n):
        s0 += w[i] * y[i]
        q0 += w[i] * y[i] * y[i]
    nw[0] = wsum
    ns[0] = s0
    nq[0] = q0
    val[0] = s0 / wsum if wsum > 0 else 0.0
    n_nodes = 1
    level = np.zeros(1, np.int64)
    slot_of = np.full(cap, -1, np.int64)
    rng_state = np.uint64(seed)
    depth = 0
    while level.shape[0] > 0 and depth < max_depth:
        n_open = 0
        for k in range(level.shape[0]):
            nd = level[k]
            if nw[nd] >= 2.0 * min_leaf:
                slot_of[nd] = n_open
                n_open += 1
            else:
                slot_of[nd] = -1
        if n_open == 0:
            break
        open_nodes = np.empty(n_open, np.int64)
        for k in range(level.shape[0]):
            if slot_of[level[k]] >= 0:
                open_nodes[slot_of[level[k]]] = level[k]
        mask = np.ones((n_open, p), np.bool_)
        subsample_features = mtry < p
        if subsample_features:
            perm = np.empty(p, np.int64)
            for s in range(n_open):
                for f in range(p):
                    perm[f] = f
                    mask[s, f] = False
                for f in range(mtry):
                    rng_state, r = _splitmix(rng_state)
                    j = f + np.int64(r % np.uint64(p - f))
                    tmp = perm[f]
                    perm[f] = perm[j]
                    perm[j] = tmp
                    mask[s, perm[f]] = True
        best_crit = np.empty(n_open)
        best_f = np.full(n_open, -1, np.int64)
        best_thr = np.zeros(n_open)
        best_wl = np.zeros(n_open)
        best_sl = np.zeros(n_open)
        best_ql = np.zeros(n_open)
        # a split must beat the parent's score by more than a relative floor
        for s in range(n_open):
            nd = open_nodes[s]
            best_crit[s] = ns[nd] * ns[nd] / nw[nd] + 1e-12 * nq[nd]
        for i in range(n):
            slot_row[i] = slot_of[node_of[i]] if w[i] != 0.0 else -1
        cw = np.zeros(n_open)
        cs = np.zeros(n_open)
        cq = np.zeros(n_open)
        last = np.zeros(n_open)
        seen = np.zeros(n_open, np.bool_)
        for f in range(p):
            used = False
            for s in range(n_open):
                if mask[s, f]:
                    used = True
                    break
            if not used:
                continue
            cw[:] = 0.0
            cs[:] = 0.0
            cq[:] = 0.0
            seen[:] = False
            for t in range(n):
                i = order[f, t]
                s = slot_row[i]
                if s < 0 or (subsample_features and not mask[s, f]):
                    continue
                xi = xsorted[f, t]
                if seen[s] and xi > last[s]:
                    wl = cw[s]
                    nd = open_nodes[s]
                    wr = nw[nd] - wl
                    if wl >= min_leaf and wr >= min_leaf:
                        sl = cs[s]
                        sr = ns[nd] - sl
                        # score sl^2/wl + sr^2/wr compared without dividing
                        if sl * sl * wr + sr * sr * wl > best_crit[s] * (wl * wr):
                            best_crit[s] = sl * sl / wl + sr * sr / wr
                            best_f[s] = f
                            mid = last[s] + 0.5 * (xi - last[s])
                            if mid >= xi:
                                mid = last[s]
                            best_thr[s] = mid
                            best_wl[s] = wl
                            best_sl[s] = sl
                            best_ql[s] = cq[s]
                cw[s] += stat[i, 0]
                cs[s] += stat[i, 1]
                cq[s] += stat[i, 2]
                last[s] = xi
                seen[s] = True
        n_split = 0
        for s in range(n_open):
            if best_f[s] >= 0:
                n_split += 1
        if n_split == 0:
            break
        nxt = np.empty(2 * n_split, np.int64)
        m = 0
        for s in range(n_open):
            if best_f[s] < 0:
                continue
            nd = open_nodes[s]
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            feat[nd] = best_f[s]
            thr[nd] = best_thr[s]
            left[nd] = lc
            right[nd] = rc
            nw[lc] = best_wl[s]
            ns[lc] = best_sl[s]
            nq[lc] = best_ql[s]
            nw[rc] = nw[nd] - best_wl[s]
            ns[rc] = ns[nd] - best_sl[s]
            nq[rc] = nq[nd] - best_ql[s]
            val[lc] = ns[lc] / nw[lc]
            val[rc] = ns[rc] / nw[rc]
            nxt[m] = lc
            nxt[m + 1] = rc
            m += 2
        for i in range(n):
            nd = node_of[i]
            f = feat[nd]
            if f >= 0:
                if xt[f, i] <= thr[nd]:
                    node_of[i] = left[nd]
                else:
                    node_of[i] = right[nd]
        for k in range(level.shape[0]):
            slot_of[level[k]] = -1
        level = nxt
        depth += 1
    return (
        feat[:n_nodes].copy(),
        thr[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        val[:n_nodes].copy(),
        node_of,
    )


@numba.njit(cache=True, nogil=True)
def _predict_sum(x, feat, thr, left, right, val, roots, init, checkpoints, out):
    """Row-wise ``init + sum_t tree_t(x)``; ``out[c, i]`` holds the sum after ``checkpoints[c]`` trees."""
    n = x.shape[0]
    n_trees = roots.shape[0]
    for i in range(n):
        acc = init
        c = 0
        for t in range(n_trees):
            nd = roots[t]
            while feat[nd] >= 0:
                if x[i, feat[nd]] <= thr[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
            acc += val[nd]
            while c < checkpoints.shape[0] and checkpoints[c] == t + 1:
                out[c, i] = acc
                c += 1
        while c < checkpoints.shape[0]:
            out[c, i] = acc
            c += 1


def validate_tree_hp(hp: dict, mode: str) -> dict:
    if mode not in TREE_DEFAULTS:
        raise ValueError(f"mode must be 'bagging' or 'boosting', got {mode!r}")
    unknown = set(hp) - set(TREE_DEFAULTS[mode])
    if unknown:
        raise ValueError(f"unknown {mode} hyperparameters: {sorted(unknown)}")
    out = {**TREE_DEFAULTS[mode], **hp}
    depth = out["max_depth"]
    if depth is not None and (int(depth) != depth or not 0 <= depth <= 12):
        raise ValueError(f"max_depth must be an integer in [0, 12] or None (unlimited), got {depth}")
    if not (int(out["n_estimators"]) == out["n_estimators"] and 1 <= out["n_estimators"] <= 2000):
        raise ValueError(f"n_estimators must be in [1, 2000], got {out['n_estimators']}")
    if not (int(out["min_samples_leaf"]) == out["min_samples_leaf"] and out["min_samples_leaf"] >= 1):
        raise ValueError(f"min_samples_leaf must be an integer >= 1, got {out['min_samples_leaf']}")
    if not 0 < out["max_features"] <= 1:
        raise ValueError(f"max_features must be a fraction in (0, 1], got {out['max_features']}")
    if mode == "boosting":
        if not 0 < out["learning_rate"] <= 1:
            raise ValueError(f"learning_rate must be in (0, 1], got {out['learning_rate']}")
        if not 0 < out["subsample"] <= 1:
            raise ValueError(f"subsample must be in (0, 1], got {out['subsample']}")
        if out["n_iter_no_change"] is not None and out["n_iter_no_change"] < 1:
            raise ValueError("n_iter_no_change must be None or >= 1")
        if not 0 < out["validation_fraction"] < 1:
            raise ValueError("validation_fraction must be in (0, 1)")
    return out


@dataclass
class TreeEnsemble(PredictorModel):
    """Bagged ("forest") or boosted ("gbm") regression trees."""

    mode: str = "boosting"
    hp: dict = field(default_factory=dict)
    seed: int = 0
    init: float = 0.0
    feature: np.ndarray | None = None
    threshold: np.ndarray | None = None
    left: np.ndarray | None = None
    right: np.ndarray | None = None
    value: np.ndarray | None = None
    roots: np.ndarray | None = None
    n_features: int = 0
    train_loss: list = field(default_factory=list)

    def __post_init__(self):
        self.hp = validate_tree_hp(self.hp, self.mode)

    @property
    def kind(self) -> str:
        return "gbm" if self.mode == "boosting" else "forest"

    @property
    def n_trees(self) -> int:
        return 0 if self.roots is None else len(self.roots)

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (n, p) with one target per row")
        n, p = X.shape
        self.n_features = p
        xt = np.ascontiguousarray(X.T)
        order = np.ascontiguousarray(np.argsort(xt, axis=1, kind="stable"))
        xsorted = np.ascontiguousarray(np.take_along_axis(xt, order, axis=1))
        hp = self.hp
        depth = UNLIMITED_DEPTH if hp["max_depth"] is None else int(hp["max_depth"])
        mtry = max(1, int(round(hp["max_features"] * p)))
        min_leaf = float(hp["min_samples_leaf"])
        trees = []
        self.train_loss = []
        if self.mode == "bagging":
            self.init = 0.0
            for t in range(int(hp["n_estimators"])):
                if hp["bootstrap"]:
                    draw = stream(self.seed, f"bootstrap/{t}").integers(0, n, n)
                    w = np.bincount(draw, minlength=n).astype(float)
                else:
                    w = np.ones(n)
                tree = _grow(xt, order, xsorted, y, w, depth, min_leaf, mtry, np.uint64(child_seed(self.seed, f"features/{t}")))
                trees.append(tree[:5])
        else:
            lr = float(hp["learning_rate"])
            fit_rows = np.arange(n)
            val_rows = None
            if hp["n_iter_no_change"] is not None:
                perm = stream(self.seed, "early-stopping").permutation(n)
                n_val = max(1, int(round(hp["validation_fraction"] * n)))
                val_rows = np.sort(perm[:n_val])
                fit_rows = np.sort(perm[n_val:])
            base_w = np.zeros(n)
            base_w[fit_rows] = 1.0
            self.init = float(y[fit_rows].mean())
            F = np.full(n, self.init)
            best_val, best_iter, stale = np.inf, 0, 0
            n_fit = len(fit_rows)
            for t in range(int(hp["n_estimators"])):
                if hp["subsample"] < 1.0:
                    k = max(1, int(round(hp["subsample"] * n_fit)))
                    pick = stream(self.seed, f"subsample/{t}").choice(fit_rows, size=k, replace=False)
                    w = np.zeros(n)
                    w[pick] = 1.0
                else:
                    w = base_w
                resid = y - F
                feat, thr, lft, rgt, val, leaf = _grow(
                    xt, order, xsorted, resid, w, depth, min_leaf, mtry, np.uint64(child_seed(self.seed, f"features/{t}"))
                )
                val = val * lr
                F = F + val[leaf]
                trees.append((feat, thr, lft, rgt, val))
                r = y[fit_rows] - F[fit_rows]
                self.train_loss.append(float(r @ r / n_fit))
                if val_rows is not None:
                    rv = y[val_rows] - F[val_rows]
                    loss = float(rv @ rv)
                    if loss < best_val:
                        best_val, best_iter, stale = loss, t + 1, 0
                    else:
                        stale += 1
                        if stale >= hp["n_iter_no_change"]:
                            break
            if val_rows is not None:
                trees = trees[:best_iter]
                self.train_loss = self.train_loss[:best_iter]
        self._pack(trees)
        return self

    def _pack(self, trees):
        sizes = np.array([len(t[0]) for t in trees], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.feature = np.concatenate([t[0] for t in trees]).astype(np.int64)
        self.threshold = np.concatenate([t[1] for t in trees]).astype(float)
        self.left = np.concatenate([np.where(t[2] >= 0, t[2] + o, -1) for t, o in zip(trees, offsets)]).astype(np.int64)
        self.right = np.concatenate([np.where(t[3] >= 0, t[3] + o, -1) for t, o in zip(trees, offsets)]).astype(np.int64)
        self.value = np.concatenate([t[4] for t in trees]).astype(float)
        self.roots = offsets

    def staged_predict(self, X, stages) -> np.ndarray:
        """Predictions after each tree count in ``stages`` (ascending); shape (len(stages), n)."""
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} columns, got {X.shape}")
        stages = np.asarray(stages, dtype=np.int64)
        out = np.empty((len(stages), X.shape[0]))
        _predict_sum(X, self.feature, self.threshold, self.left, self.right, self.value, self.roots, self.init, stages, out)
        if self.mode == "bagging":
            out /= np.minimum(stages, self.n_trees)[:, None]
        return out

    def predict(self, X) -> np.ndarray:
        return self.staged_predict(X, [self.n_trees])[0]

    def params(self) -> dict:
        return {
            "mode": self.mode,
            "init": self.init,
            "n_features": self.n_features,
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
            "roots": self.roots,
        }


def fit_tree_ensemble(X, y, hp: dict | None = None, mode: str = "boosting", seed: int = 0) -> TreeEnsemble:
    X = X.matrix() if hasattr(X, "matrix") else X
    return TreeEnsemble(mode=mode, hp=dict(hp or {}), seed=seed).fit(X, y)


def fit_tree(X, y, max_depth: int | None, min_samples_leaf: int = 1) -> TreeEnsemble:
    """A single unbagged tree using every feature at every split."""
    hp = {"n_estimators": 1, "max_depth": max_depth, "min_samples_leaf": min_samples_leaf,
          "max_features": 1.0, "bootstrap": False}
    return fit_tree_ensemble(X, y, hp, mode="bagging", seed=0)
