"""LASSO paths by cyclic coordinate descent and eigenvector subset selection.

The penalised objective on standardised columns is::

    (1 / 2n) * ||y~ - X~ b||^2 + lam * ||b||_1

with the intercept unpenalised (handled by centring), so the smallest
penalty giving an all-zero solution is ``max|X~'y~| / n``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numba
import numpy as np

from .rng import stream

__all__ = [
    "LassoPath",
    "SelectedSubset",
    "LassoConvergenceError",
    "lasso_path",
    "lasso_objective",
    "coordinate_descent",
    "select_mse_cv",
    "select_bic",
    "bic_scores",
    "fold_assignment",
    "selection_design",
    "select_eigenvectors",
    "save_subset",
]

MAX_SWEEPS = 100_000


class LassoConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class LassoPath:
    lambdas: np.ndarray
    coefs: np.ndarray  # (n_lambdas, p), original scale
    intercepts: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    std_coefs: np.ndarray = field(repr=False)

    def predict(self, design: np.ndarray) -> np.ndarray:
        """Predictions for every lambda, shape ``(n_rows, n_lambdas)``."""
        return design @ self.coefs.T + self.intercepts


@dataclass(frozen=True)
class SelectedSubset:
    indices: tuple[int, ...]
    criterion: Literal["mse_cv", "bic", "none"]
    chosen_lambda: float
    score: float
    per_block: dict[str, tuple[int, ...]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise ValueError("selected indices must be unique")
        object.__setattr__(self, "indices", idx)

    @property
    def count(self) -> int:
        return len(self.indices)


@numba.njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@numba.njit(cache=True)
def _cd_gram(gram, corr, lam, b, tol, max_sweeps):
    """Coordinate descent on the Gram form; returns (sweeps, converged). ``b`` updated in place."""
    p = b.shape[0]
    rho = corr - gram @ b
    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in range(p):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            old = b[j]
            new = _soft(rho[j] + gjj * old, lam) / gjj
            if new != old:
                delta = new - old
                b[j] = new
                for k in range(p):
                    rho[k] -= gram[k, j] * delta
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change < tol:
            return sweep, True
    return max_sweeps, False


def _standardize(design: np.ndarray, y: np.ndarray):
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n = design.shape[0]
    mean = design.mean(axis=0)
    scale = design.std(axis=0)
    live = scale > 1e-12 * np.maximum(1.0, np.abs(mean))
    safe = np.where(live, scale, 1.0)
    xs = (design - mean) / safe
    xs[:, ~live] = 0.0
    yc = y - y.mean()
    return xs, yc, mean, np.where(live, scale, 0.0), n


def lambda_grid(design, y, n_lambdas: int = 100, eps: float = 1e-4) -> np.ndarray:
    xs, yc, _, _, n = _standardize(design, y)
    lam_max = float(np.max(np.abs(xs.T @ yc)) / n)
    if lam_max <= 0:
        lam_max = 1e-12
    return np.geomspace(lam_max, eps * lam_max, n_lambdas)


def coordinate_descent(gram, corr, lam, b0=None, tol=1e-7, max_sweeps=MAX_SWEEPS):
    """Solve one penalty level from ``b0`` (cold start when None). Returns (b, sweeps)."""
    b = np.zeros(len(corr)) if b0 is None else np.array(b0, dtype=float)
    sweeps, ok = _cd_gram(np.ascontiguousarray(gram), np.asarray(corr, float), float(lam), b, tol, max_sweeps)
    if not ok:
        raise LassoConvergenceError(f"coordinate descent did not converge in {max_sweeps} sweeps at lambda={lam:.6g}")
    return b, sweeps


def lasso_objective(xs, yc, b, lam) -> float:
    r = yc - xs @ b
    return float(r @ r / (2 * len(yc)) + lam * np.abs(b).sum())


def lasso_path(
    design,
    y,
    n_lambdas: int = 100,
    lambdas=None,
    eps: float = 1e-4,
    tol: float = 1e-7,
    max_sweeps: int = MAX_SWEEPS,
) -> LassoPath:
    """Warm-started LASSO path over a geometric penalty grid.

    Columns are standardised internally (population sd); coefficients are
    reported on the original scale. Constant columns stay at zero.
    """
    xs, yc, mean, scale, n = _standardize(design, y)
    if xs.shape[1] < 1:
        raise ValueError("design needs at least one column")
    if lambdas is None:
        lam_max = float(np.max(np.abs(xs.T @ yc)) / n)
        lambdas = np.geomspace(max(lam_max, 1e-12), eps * max(lam_max, 1e-12), n_lambdas)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambdas must be strictly descending")
    gram = np.ascontiguousarray(xs.T @ xs / n)
    corr = xs.T @ yc / n
    b = np.zeros(xs.shape[1])
    std_coefs = np.empty((len(lambdas), xs.shape[1]))
    for k, lam in enumerate(lambdas):
        b, _ = coordinate_descent(gram, corr, lam, b, tol, max_sweeps)
        std_coefs[k] = b
    safe = np.where(scale > 0, scale, 1.0)
    coefs = np.where(scale > 0, std_coefs / safe, 0.0)
    intercepts = np.asarray(y, float).mean() - coefs @ mean
    return LassoPath(lambdas, coefs, intercepts, mean, scale, std_coefs)


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold label per row: seeded shuffle, then contiguous nearly equal blocks."""
    if folds < 2 or n < folds:
        raise ValueError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    perm = stream(seed, "folds").permutation(n)
    labels = np.empty(n, dtype=np.int64)
    for k, block in enumerate(np.array_split(perm, folds)):
        labels[block] = k
    return labels


def select_mse_cv(design, y, folds: int = 5, seed: int = 0, n_lambdas: int = 100) -> SelectedSubset:
    """Penalty minimising mean held-out MSE over seeded folds, refit on all rows."""
    design = np.asarray(design, float)
    y = np.asarray(y, float)
    lambdas = lambda_grid(design, y, n_lambdas)
    labels = fold_assignment(len(y), folds, seed)
    mse = np.zeros(len(lambdas))
    for k in range(folds):
        train, test = labels != k, labels == k
        path = lasso_path(design[train], y[train], lambdas=lambdas)
        resid = y[test][:, None] - path.predict(design[test])
        mse += (resid**2).mean(axis=0)
    mse /= folds
    best = int(np.argmin(mse))
    full = lasso_path(design, y, lambdas=lambdas[: best + 1])
    coef = full.coefs[-1]
    return SelectedSubset(tuple(np.flatnonzero(coef != 0)), "mse_cv", float(lambdas[best]), float(mse[best]))


def bic_scores(path: LassoPath, design, y) -> np.ndarray:
    """``n ln(RSS/n) + k ln n`` along the path with ``k`` = nonzero count + 1."""
    y = np.asarray(y, float)
    n = len(y)
    rss = ((y[:, None] - path.predict(np.asarray(design, float))) ** 2).sum(axis=0)
    k = (path.coefs != 0).sum(axis=1) + 1
    return n * np.log(rss / n) + k * np.log(n)


def select_bic(design, y, n_lambdas: int = 100) -> SelectedSubset:
    path = lasso_path(design, y, n_lambdas=n_lambdas)
    scores = bic_scores(path, design, y)
    best = int(np.argmin(scores))
    return SelectedSubset(
        tuple(np.flatnonzero(path.coefs[best] != 0)), "bic", float(path.lambdas[best]), float(scores[best])
    )


def selection_design(eigvecs: np.ndarray, features: np.ndarray | None, mode: str = "svc"):
    """Design matrix for eigenvector selection and a map from columns to (block, eigen index).

    ``eigen`` regresses on the eigenvectors alone. ``svc`` mirrors the varying
    coefficient model: raw features, eigenvectors (intercept block) and every
    feature-by-eigenvector product.
    """
    eigvecs = np.asarray(eigvecs, float)
    L = eigvecs.shape[1]
    if mode == "eigen" or features is None or features.shape[1] == 0:
        return eigvecs, [("intercept", l) for l in range(L)]
    if mode != "svc":
        raise ValueError(f"unknown selection design {mode!r}")
    features = np.asarray(features, float)
    blocks = [features, eigvecs]
    colmap: list[tuple[str, int]] = [(f"x{k + 1}", -1) for k in range(features.shape[1])]
    colmap += [("intercept", l) for l in range(L)]
    for k in range(features.shape[1]):
        blocks.append(features[:, [k]] * eigvecs)
        colmap += [(f"x{k + 1}", l) for l in range(L)]
    return np.hstack(blocks), colmap


def select_eigenvectors(
    eigvecs: np.ndarray,
    y,
    criterion: Literal["mse_cv", "bic", "none"],
    features: np.ndarray | None = None,
    design: str = "svc",
    folds: int = 5,
    seed: int = 0,
) -> SelectedSubset:
    """Select eigenvector columns; the result holds the union over blocks plus per-block subsets."""
    L = np.asarray(eigvecs).shape[1]
    if criterion == "none":
        everything = tuple(range(L))
        blocks = {"intercept": everything}
        if features is not None and design == "svc":
            blocks.update({f"x{k + 1}": everything for k in range(np.asarray(features).shape[1])})
        return SelectedSubset(everything, "none", float("nan"), float("nan"), blocks)
    X, colmap = selection_design(eigvecs, features, design)
    if criterion == "mse_cv":
        raw = select_mse_cv(X, y, folds=folds, seed=seed)
    elif criterion == "bic":
        raw = select_bic(X, y)
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    per_block: dict[str, set[int]] = {}
    for col in raw.indices:
        block, l = colmap[col]
        if l >= 0:
            per_block.setdefault(block, set()).add(l)
    names = ["intercept"] + sorted({b for b, _ in colmap if b != "intercept"})
    blocks = {b: tuple(sorted(per_block.get(b, ()))) for b in names}
    union = sorted(set().union(*[set(v) for v in blocks.values()]))
    return SelectedSubset(tuple(union), criterion, raw.chosen_lambda, raw.score, blocks)


def save_subset(sub: SelectedSubset, path) -> None:
    """CSV ``criterion,lambda,index_list`` with indices separated by spaces."""
    buf = io.StringIO()
    buf.write("criterion,lambda,index_list\n")
    buf.write(f"{sub.criterion},{sub.chosen_lambda!r},{' '.join(str(i) for i in sub.indices)}\n")
    for block, idx in sub.per_block.items():
        buf.write(f"{sub.criterion}:{block},{sub.chosen_lambda!r},{' '.join(str(i) for i in idx)}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
