"""Synthetic spatial datasets: Gaussian random field coefficients and the mixed DGP.

The response is::

    y = 3 + (beta1 * x1 + x1**2) + (beta2 * x2 + 2 * x2) + eps

with ``beta1``/``beta2`` zero-mean Gaussian random fields of squared-exponential
covariance (scales 8 and 12), ``x1, x2 ~ U(-2, 2)`` and Gaussian noise.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.linalg

from .geometry import PointSet, pairwise_distances
from .rng import stream

__all__ = [
    "GrfSpec",
    "SyntheticDataset",
    "GrfError",
    "grf_covariance",
    "sample_grf",
    "assemble_response",
    "generate_dataset",
    "noise_sd_for",
    "save_dataset",
    "load_dataset",
]

INTERCEPT = 3.0
BETA1_SCALE = 8.0
BETA2_SCALE = 12.0
NOISE_LEVEL = 0.5
MAX_JITTER = 1e-4
DATASET_HEADER = "id,x,y,x1,x2,beta1,beta2,noise,response"


class GrfError(RuntimeError):
    pass


@dataclass(frozen=True)
class GrfSpec:
    scale: float
    mean: float = 0.0
    jitter: float = 1e-10

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"GRF scale must be positive, got {self.scale}")
        if not 1e-12 <= self.jitter <= MAX_JITTER:
            raise ValueError(f"jitter must lie in [1e-12, {MAX_JITTER}], got {self.jitter}")


@dataclass(frozen=True)
class SyntheticDataset:
    points: PointSet
    x1: np.ndarray
    x2: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    noise: np.ndarray
    y: np.ndarray
    seed: int
    noise_sd: float

    @property
    def n(self) -> int:
        return self.points.n

    def features(self) -> np.ndarray:
        return np.column_stack([self.x1, self.x2])

    def reassemble(self) -> np.ndarray:
        return assemble_response(self.x1, self.x2, self.beta1, self.beta2, self.noise)


def grf_covariance(d: np.ndarray, scale: float) -> np.ndarray:
    return np.exp(-0.5 * (np.asarray(d) / scale) ** 2)


def _cholesky(omega: np.ndarray, jitter: float) -> np.ndarray:
    n = omega.shape[0]
    eye = np.eye(n)
    j = jitter
    while True:
        try:
            return scipy.linalg.cholesky(omega + j * eye, lower=True)
        except np.linalg.LinAlgError:
            if j >= MAX_JITTER:
                raise GrfError(f"covariance not positive definite even with jitter {j:g}") from None
            j = min(j * 10.0, MAX_JITTER)


def sample_grf(
    points: PointSet | np.ndarray,
    spec: GrfSpec,
    seed: int | np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw from GRF(mean, exp(-0.5 (d/l)^2)) by Cholesky factorisation.

    The jitter is multiplied by ten until the factorisation succeeds, up to
    1e-4. With ``size`` given, returns ``size`` independent replicates as rows.
    """
    d = pairwise_distances(points)
    chol = _cholesky(grf_covariance(d, spec.scale), spec.jitter)
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "grf")
    n = d.shape[0]
    if size is None:
        return spec.mean + chol @ rng.standard_normal(n)
    z = rng.standard_normal((size, n))
    return spec.mean + z @ chol.T


def assemble_response(x1, x2, beta1, beta2, noise) -> np.ndarray:
    return INTERCEPT + (beta1 * x1 + x1**2) + (beta2 * x2 + 2.0 * x2) + noise


def noise_sd_for(convention: Literal["variance", "sd"] = "variance", level: float = NOISE_LEVEL) -> float:
    """Noise standard deviation for ``N(0, level)``, read as a variance (default) or an sd."""
    if convention == "variance":
        return float(np.sqrt(level))
    if convention == "sd":
        return float(level)
    raise ValueError(f"unknown noise convention {convention!r}")


def generate_dataset(
    points: PointSet,
    seed: int,
    noise: Literal["variance", "sd"] = "variance",
    jitter: float = 1e-10,
) -> SyntheticDataset:
    """Simulate one realisation of the DGP on ``points``.

    Draws come from the labelled streams ``x1``, ``x2``, ``beta1``, ``beta2``
    and ``eps`` of the master seed.
    """
    n = points.n
    x1 = stream(seed, "x1").uniform(-2.0, 2.0, n)
    x2 = stream(seed, "x2").uniform(-2.0, 2.0, n)
    beta1 = sample_grf(points, GrfSpec(BETA1_SCALE, jitter=jitter), stream(seed, "beta1"))
    beta2 = sample_grf(points, GrfSpec(BETA2_SCALE, jitter=jitter), stream(seed, "beta2"))
    sd = noise_sd_for(noise)
    eps = stream(seed, "eps").normal(0.0, sd, n)
    y = assemble_response(x1, x2, beta1, beta2, eps)
    return SyntheticDataset(points, x1, x2, beta1, beta2, eps, y, int(seed), sd)


def save_dataset(ds: SyntheticDataset, path) -> None:
    cols = [ds.points.coords[:, 0], ds.points.coords[:, 1], ds.x1, ds.x2, ds.beta1, ds.beta2, ds.noise, ds.y]
    buf = io.StringIO()
    buf.write(DATASET_HEADER + "\n")
    for i, pid in enumerate(ds.points.ids):
        buf.write(pid + "," + ",".join(repr(float(c[i])) for c in cols) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def load_dataset(path, seed: int = -1, noise_sd: float = float("nan"), points: PointSet | None = None) -> SyntheticDataset:
    """Read a dataset CSV. ``points`` (e.g. with adjacency) replaces the bare coordinates if given."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if lines[0] != DATASET_HEADER:
        raise ValueError(f"{path}: expected header {DATASET_HEADER!r}")
    ids, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 9:
            raise ValueError(f"{path}:{lineno}: expected 9 fields, got {len(parts)}")
        ids.append(parts[0])
        rows.append([float(v) for v in parts[1:]])
    a = np.array(rows, dtype=float)
    if points is None:
        points = PointSet(a[:, :2], tuple(ids))
    elif tuple(points.ids) != tuple(ids):
        raise ValueError("supplied points do not match dataset ids")
    return SyntheticDataset(points, a[:, 2], a[:, 3], a[:, 4], a[:, 5], a[:, 6], a[:, 7], seed, noise_sd)
