"""Nested k-fold cross-validation with out-of-sample R^2."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..lasso_select import fold_assignment
from ..rng import child_seed
from .base import PredictorModel
from .linear import ESFModel, ESFSVCModel, LinearModel, MeanModel
from .trees import TreeEnsemble

__all__ = ["ModelSpec", "CVResult", "cross_validate", "select_hp", "r2_score", "expand_grid", "ZeroVarianceFoldError"]


class ZeroVarianceFoldError(ValueError):
    pass


def r2_score(y, pred) -> float:
    """``1 - SS_res / SS_tot`` with ``SS_tot`` centred on the mean of ``y`` itself."""
    y = np.asarray(y, float)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot <= 0:
        raise ZeroVarianceFoldError("target has zero variance in this fold; R^2 undefined")
    ss_res = float(((y - np.asarray(pred, float)) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class ModelSpec:
    """What to fit: a model kind, fixed hyperparameters and structural settings.

    ``n_nonspatial`` and ``subsets`` apply to ``esf``/``esf_svc``.
    """

    kind: str
    hp: dict = field(default_factory=dict)
    n_nonspatial: int = 0
    subsets: tuple = ()
    seed: int = 0

    def build(self, hp: dict | None = None, seed: int | None = None) -> PredictorModel:
        hp = {**self.hp, **(hp or {})}
        seed = self.seed if seed is None else seed
        if self.kind == "mean":
            return MeanModel(hp=hp, seed=seed)
        if self.kind == "linear":
            return LinearModel(hp=hp, seed=seed)
        if self.kind == "esf":
            return ESFModel(hp=hp, seed=seed, n_nonspatial=self.n_nonspatial)
        if self.kind == "esf_svc":
            return ESFSVCModel(n_nonspatial=self.n_nonspatial, subsets=self.subsets, hp=hp, seed=seed)
        if self.kind == "forest":
            return TreeEnsemble(mode="bagging", hp=hp, seed=seed)
        if self.kind == "gbm":
            return TreeEnsemble(mode="boosting", hp=hp, seed=seed)
        raise ValueError(f"unknown model kind {self.kind!r}")


@dataclass(frozen=True)
class CVResult:
    fold_r2: tuple[float, ...]
    seed: int
    chosen_hp: tuple[dict, ...] = ()

    @property
    def k(self) -> int:
        return len(self.fold_r2)

    @property
    def mean_r2(self) -> float:
        return float(np.mean(self.fold_r2))


def expand_grid(grid: dict | list | None) -> list[dict]:
    """A dict of value lists becomes the list of all combinations (keys in sorted order)."""
    if grid is None:
        return [{}]
    if isinstance(grid, dict):
        keys = sorted(grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    return [dict(g) for g in grid] or [{}]


def _score_candidates(spec: ModelSpec, cands: list[dict], Xtr, ytr, Xva, yva, seed: int) -> np.ndarray:
    """R^2 on the validation rows for each candidate.

    Boosting candidates that differ only in ``n_estimators`` share one fit
    read off at several stages.
    """
    scores = np.empty(len(cands))
    if spec.kind == "gbm":
        groups: dict[tuple, list[int]] = {}
        for i, c in enumerate(cands):
            key = tuple(sorted((k, repr(v)) for k, v in c.items() if k != "n_estimators"))
            groups.setdefault(key, []).append(i)
        for members in groups.values():
            stages = sorted({int({**spec.hp, **cands[i]}.get("n_estimators", 300)) for i in members})
            hp = {**cands[members[0]], "n_estimators": stages[-1]}
            model = spec.build(hp, seed).fit(Xtr, ytr)
            staged = model.staged_predict(Xva, stages)
            for i in members:
                n_est = int({**spec.hp, **cands[i]}.get("n_estimators", 300))
                scores[i] = r2_score(yva, staged[stages.index(n_est)])
        return scores
    for i, c in enumerate(cands):
        scores[i] = r2_score(yva, spec.build(c, seed).fit(Xtr, ytr).predict(Xva))
    return scores


def _select(spec, cands, X, y, inner_k, seed):
    if len(cands) == 1:
        return cands[0]
    labels = fold_assignment(len(y), inner_k, seed)
    total = np.zeros(len(cands))
    for f in range(inner_k):
        tr, va = labels != f, labels == f
        total += _score_candidates(spec, cands, X[tr], y[tr], X[va], y[va], child_seed(seed, f"inner-fit/{f}"))
    return cands[int(np.argmax(total / inner_k))]


def cross_validate(
    spec: ModelSpec,
    X,
    y,
    k: int = 5,
    grid: dict | list | None = None,
    seed: int = 0,
    inner_k: int = 3,
    threads: int = 1,
) -> CVResult:
    """Nested k-fold CV.

    For each outer fold the hyperparameters are picked by mean inner-CV R^2 on
    the training part (skipped when the grid has a single point), the model is
    refit on the training part and scored on the held-out fold. Fold results
    do not depend on the order or concurrency with which folds run.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    labels = fold_assignment(len(y), k, seed)
    cands = expand_grid(grid)

    def one(f: int):
        tr, te = labels != f, labels == f
        if np.ptp(y[te]) == 0:
            raise ZeroVarianceFoldError(f"fold {f}: held-out target has zero variance")
        hp = _select(spec, cands, X[tr], y[tr], inner_k, child_seed(seed, f"inner/{f}"))
        model = spec.build(hp, child_seed(seed, f"fit/{f}")).fit(X[tr], y[tr])
        return r2_score(y[te], model.predict(X[te])), hp

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, range(k)))
    else:
        out = [one(f) for f in range(k)]
    return CVResult(tuple(r for r, _ in out), int(seed), tuple(h for _, h in out))


def select_hp(spec: ModelSpec, X, y, grid: dict | list | None = None, inner_k: int = 3, seed: int = 0) -> dict:
    """Hyperparameters chosen by ``inner_k``-fold CV on all rows (for a final full-data fit)."""
    return _select(spec, expand_grid(grid), np.asarray(X, float), np.asarray(y, float), inner_k, child_seed(seed, "inner/all"))
