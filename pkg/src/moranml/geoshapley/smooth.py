"""Univariate geographically weighted regression for coefficient surfaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import pairwise_distances

__all__ = ["SmoothResult", "svc_smooth", "gwr_fit", "bandwidth_grid", "MIN_SPREAD"]

MIN_SPREAD = 1e-8
_MAX_WIDEN = 60


@dataclass(frozen=True)
class SmoothResult:
    slopes: np.ndarray
    intercepts: np.ndarray
    bandwidth: float
    widened: np.ndarray  # locations whose window was widened
    cv_scores: dict | None = None


def _weighted_moments(K: np.ndarray, x: np.ndarray, z: np.ndarray):
    s0 = K.sum(axis=1)
    sx = K @ x
    sz = K @ z
    sxx = K @ (x * x)
    sxz = K @ (x * z)
    return s0, sx, sz, sxx, sxz


def _solve(s0, sx, sz, sxx, sxz):
    mx = sx / s0
    mz = sz / s0
    vxx = sxx / s0 - mx * mx
    cxz = sxz / s0 - mx * mz
    return mx, mz, vxx, cxz


def _kernel(d: np.ndarray, h: float) -> np.ndarray:
    if np.isinf(h):
        return np.ones_like(d)
    return np.exp(-0.5 * (d / h) ** 2)


def gwr_fit(z, x, d: np.ndarray, h: float, exclude_self: bool = False) -> SmoothResult:
    """Local weighted least squares of ``z`` on ``(1, x)`` at every location.

    A window whose weighted variance of ``x`` is negligible is widened by
    doubling ``h`` at that location until it is not; such locations are
    flagged in ``widened``.
    """
    z = np.asarray(z, float)
    x = np.asarray(x, float)
    n = len(z)
    scale = max(float(np.var(x)), 1e-300)
    K = _kernel(d, h)
    if exclude_self:
        np.fill_diagonal(K, 0.0)
    s0, sx, sz, sxx, sxz = _weighted_moments(K, x, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        mx, mz, vxx, cxz = _solve(s0, sx, sz, sxx, sxz)
    bad = ~(s0 > 0) | ~(vxx > MIN_SPREAD * scale)
    widened = bad.copy()
    slopes = np.zeros(n)
    inter = np.zeros(n)
    ok = ~bad
    slopes[ok] = cxz[ok] / vxx[ok]
    inter[ok] = mz[ok] - slopes[ok] * mx[ok]
    for i in np.flatnonzero(bad):
        hi = h
        for _ in range(_MAX_WIDEN):
            hi *= 2.0
            k = _kernel(d[i], hi)
            if exclude_self:
                k[i] = 0.0
            w0 = k.sum()
            if w0 <= 0:
                continue
            m_x = k @ x / w0
            v = k @ (x * x) / w0 - m_x * m_x
            if v > MIN_SPREAD * scale:
                m_z = k @ z / w0
                slopes[i] = (k @ (x * z) / w0 - m_x * m_z) / v
                inter[i] = m_z - slopes[i] * m_x
                break
        else:
            raise ValueError(f"x has no spread around location {i} at any bandwidth")
    return SmoothResult(slopes, inter, float(h), widened)


def bandwidth_grid(d: np.ndarray, n_grid: int = 20) -> np.ndarray:
    """Log-spaced bandwidths from the median nearest-neighbour distance to the largest distance."""
    off = d + np.diag(np.full(len(d), np.inf))
    lo = float(np.median(off.min(axis=1)))
    hi = float(d.max())
    if not lo > 0 or not hi > lo:
        return np.array([max(hi, 1.0)])
    return np.geomspace(lo, hi, n_grid)


def svc_smooth(phi, x, coords, bandwidth="cv", return_details: bool = False):
    """Local slopes of ``phi`` regressed on ``x`` with Gaussian spatial weights.

    Parameters
    ----------
    phi : (n,) array
        Usually the ``GEO x j`` interaction component for feature ``j``.
    x : (n,) array
        Feature values.
    coords : (n, 2) array or PointSet
    bandwidth : float or "cv"
        Kernel bandwidth ``h`` in ``exp(-0.5 (d/h)^2)``; ``"cv"`` picks it by
        leave-one-out prediction error over :func:`bandwidth_grid`.
    """
    d = pairwise_distances(coords)
    phi = np.asarray(phi, float)
    x = np.asarray(x, float)
    scores = None
    if isinstance(bandwidth, str):
        if bandwidth != "cv":
            raise ValueError(f"bandwidth must be positive or 'cv', got {bandwidth!r}")
        scores = {}
        for h in bandwidth_grid(d):
            loo = gwr_fit(phi, x, d, h, exclude_self=True)
            resid = phi - (loo.intercepts + loo.slopes * x)
            scores[float(h)] = float(resid @ resid)
        h = min(scores, key=scores.get)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise ValueError(f"bandwidth must be positive, got {h}")
    res = gwr_fit(phi, x, d, h)
    res = SmoothResult(res.slopes, res.intercepts, res.bandwidth, res.widened, scores)
    return res if return_details else res.slopes
