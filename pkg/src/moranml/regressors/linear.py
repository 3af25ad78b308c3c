"""Least-squares models: linear baseline, ESF and ESF with varying coefficients.

All three solve ordinary least squares through a column-pivoted QR
factorisation, which doubles as the rank check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .base import FeatureBundle, PredictorModel

__all__ = [
    "RankDeficientError",
    "ols_solve",
    "MeanModel",
    "LinearModel",
    "ESFModel",
    "ESFSVCModel",
    "fit_ols",
    "fit_esf",
    "fit_esf_svc",
    "shared_subsets",
]


class RankDeficientError(ValueError):
    def __init__(self, dependent: list[str], rank: int, ncol: int):
        self.dependent = dependent
        super().__init__(
            f"design matrix is rank deficient (rank {rank} of {ncol} columns); "
            f"linearly dependent columns: {', '.join(dependent)}"
        )


def ols_solve(A: np.ndarray, y: np.ndarray, names=None, rtol: float | None = None) -> np.ndarray:
    """Least-squares coefficients of ``A b ~ y`` by column-pivoted QR.

    Raises :class:`RankDeficientError` naming the columns pivoted past the
    numerical rank (``rtol`` relative to the largest diagonal of R).
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = A.shape
    if n < p:
        raise RankDeficientError([f"more columns ({p}) than rows ({n})"], n, p)
    q, r, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = (rtol if rtol is not None else max(n, p) * np.finfo(float).eps) * (diag[0] if p else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        names = list(names) if names is not None else [f"col{j}" for j in range(p)]
        raise RankDeficientError([names[j] for j in sorted(piv[rank:])], rank, p)
    b = np.empty(p)
    b[piv] = scipy.linalg.solve_triangular(r, q.T @ y)
    return b



def _as_matrix(X, ncols: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if ncols is not None and X.shape[1] != ncols:
        raise ValueError(f"expected {ncols} columns, got {X.shape[1]}")
    return X


@dataclass
class MeanModel(PredictorModel):
    """Predicts the training mean; a null model for CV checks."""

    hp: dict = field(default_factory=dict)
    seed: int = 0
    mean: float = 0.0
    n_features: int = 0
    kind = "mean"

    def fit(self, X, y):
        self.n_features = _as_matrix(X).shape[1]
        self.mean = float(np.mean(y))
        return self

    def predict(self, X):
        return np.full(_as_matrix(X, self.n_features).shape[0], self.mean)

    def params(self):
        return {"mean": self.mean, "n_features": self.n_features}


@dataclass
class LinearModel(PredictorModel):
    """OLS on ``[1, X]``; ``coef[0]`` is the intercept."""

    hp: dict = field(default_factory=dict)
    seed: int = 0
    coef: np.ndarray | None = None
    kind = "linear"

    def fit(self, X, y):
        X = _as_matrix(X)
        names = ["intercept"] + [f"col{j}" for j in range(X.shape[1])]
        self.coef = ols_solve(np.column_stack([np.ones(len(X)), X]), y, names)
        return self

    def predict(self, X):
        X = _as_matrix(X, len(self.coef) - 1)
        return self.coef[0] + X @ self.coef[1:]

    def params(self):
        return {"coef": self.coef}


@dataclass
class ESFModel(LinearModel):
    """OLS on ``[1, X, E]`` with ``beta`` (intercept and X) and ``gamma`` (E) kept apart."""

    n_nonspatial: int = 0
    kind = "esf"

    @property
    def beta(self) -> np.ndarray:
        return self.coef[: self.n_nonspatial + 1]

    @property
    def gamma(self) -> np.ndarray:
        return self.coef[self.n_nonspatial + 1 :]

    def params(self):
        return {"coef": self.coef, "n_nonspatial": self.n_nonspatial}


@dataclass
class ESFSVCModel(PredictorModel):
    """Varying-coefficient ESF: ``y = sum_k X_k * (beta_k + E[:, S_k] gamma_k)`` with ``X_0 = 1``.

    Inputs are ``[X_1..X_K | E]``; ``subsets[k]`` indexes the columns of ``E``
    used by coefficient ``k``.
    """

    n_nonspatial: int = 0
    subsets: tuple = ()
    hp: dict = field(default_factory=dict)
    seed: int = 0
    coef: np.ndarray | None = None
    n_spatial: int = 0
    kind = "esf_svc"

    def __post_init__(self):
        self.subsets = tuple(tuple(int(i) for i in s) for s in self.subsets)
        if self.subsets and len(self.subsets) != self.n_nonspatial + 1:
            raise ValueError(f"need {self.n_nonspatial + 1} subsets (intercept plus one per feature)")

    def _design(self, X):
        X = _as_matrix(X)
        K = self.n_nonspatial
        xs, E = X[:, :K], X[:, K:]
        if self.n_spatial and E.shape[1] != self.n_spatial:
            raise ValueError(f"expected {self.n_spatial} eigenvector columns, got {E.shape[1]}")
        cols, names = [np.ones(len(X))], ["intercept"]
        subsets = self.subsets or ((),) * (K + 1)
        for l in subsets[0]:
            cols.append(E[:, l])
            names.append(f"e{l}")
        for k in range(K):
            cols.append(xs[:, k])
            names.append(f"x{k + 1}")
            for l in subsets[k + 1]:
                cols.append(xs[:, k] * E[:, l])
                names.append(f"x{k + 1}*e{l}")
        return np.column_stack(cols), names

    def fit(self, X, y):
        X = _as_matrix(X)
        self.n_spatial = X.shape[1] - self.n_nonspatial
        for s in self.subsets:
            if any(l < 0 or l >= self.n_spatial for l in s):
                raise ValueError("subset index outside the eigenvector block")
        A, names = self._design(X)
        self.coef = ols_solve(A, y, names)
        return self

    def predict(self, X):
        X = _as_matrix(X, self.n_nonspatial + self.n_spatial)
        K = self.n_nonspatial
        E = X[:, K:]
        out = self.svc_surface(0, E)
        for k in range(1, K + 1):
            out = out + X[:, k - 1] * self.svc_surface(k, E)
        return out

    def coefficients(self, k: int) -> tuple[float, np.ndarray]:
        """``(beta_k, gamma_k)`` for coefficient ``k`` (0 = intercept)."""
        subsets = self.subsets or ((),) * (self.n_nonspatial + 1)
        pos = 1 + len(subsets[0])
        if k == 0:
            return float(self.coef[0]), self.coef[1:pos]
        for j in range(1, k):
            pos += 1 + len(subsets[j])
        return float(self.coef[pos]), self.coef[pos + 1 : pos + 1 + len(subsets[k])]

    def svc_surface(self, k: int, E: np.ndarray) -> np.ndarray:
        """``beta_k + E[:, S_k] gamma_k`` at the rows of ``E``."""
        beta, gamma = self.coefficients(k)
        subsets = self.subsets or ((),) * (self.n_nonspatial + 1)
        return beta + np.asarray(E, float)[:, list(subsets[k])] @ gamma

    def params(self):
        return {
            "coef": self.coef,
            "n_nonspatial": self.n_nonspatial,
            "n_spatial": self.n_spatial,
            "subsets": [list(s) for s in self.subsets],
        }


def fit_ols(fb: FeatureBundle, y) -> LinearModel:
    """Linear regression on every column of the bundle plus an intercept."""
    A = np.column_stack([np.ones(fb.n), fb.matrix()])
    m = LinearModel()
    m.coef = ols_solve(A, y, ("intercept",) + tuple(fb.names))
    return m


def fit_esf(fb: FeatureBundle, y) -> ESFModel:
    if fb.mode != "eigenvectors":
        raise ValueError(f"ESF needs eigenvector spatial columns, bundle mode is {fb.mode!r}")
    A = np.column_stack([np.ones(fb.n), fb.matrix()])
    m = ESFModel(n_nonspatial=fb.n_nonspatial)
    m.coef = ols_solve(A, y, ("intercept",) + tuple(fb.names))
    return m


def shared_subsets(indices, K: int) -> tuple:
    """The same eigenvector subset for the intercept and all ``K`` features."""
    idx = tuple(int(i) for i in indices)
    return (idx,) * (K + 1)


def fit_esf_svc(x, subsets, basis, y) -> ESFSVCModel:
    """Fit the varying-coefficient ESF.

    Parameters
    ----------
    x : (n, K) array
        Non-spatial features.
    subsets : sequence of K + 1 index collections, or a SelectedSubset
        Eigenvector columns per coefficient (intercept first). A
        ``SelectedSubset`` is applied as one shared subset.
    basis : EigenBasis or (n, L) array
    y : (n,) array
    """
    x = _as_matrix(x)
    E = np.asarray(getattr(basis, "vectors", basis), dtype=float)
    K = x.shape[1]
    if hasattr(subsets, "indices"):
        subsets = shared_subsets(subsets.indices, K)
    model = ESFSVCModel(n_nonspatial=K, subsets=tuple(subsets))
    return model.fit(np.hstack([x, E]), y)


def model_from_params(kind: str, hp: dict, seed: int, params: dict) -> PredictorModel:
    if kind == "mean":
        return MeanModel(hp=hp, seed=seed, mean=float(params["mean"]), n_features=int(params["n_features"]))
    if kind == "linear":
        return LinearModel(hp=hp, seed=seed, coef=np.asarray(params["coef"], float))
    if kind == "esf":
        return ESFModel(hp=hp, seed=seed, coef=np.asarray(params["coef"], float), n_nonspatial=int(params["n_nonspatial"]))
    if kind == "esf_svc":
        m = ESFSVCModel(
            n_nonspatial=int(params["n_nonspatial"]), subsets=tuple(params["subsets"]), hp=hp, seed=seed
        )
        m.coef = np.asarray(params["coef"], float)
        m.n_spatial = int(params["n_spatial"])
        return m
    raise ValueError(f"unknown model kind {kind!r}")
