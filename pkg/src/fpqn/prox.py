"""Proximity operators for the isotropic TV regularizer.

With ``f1 = mu * ||.||_{1,2}`` acting on a dual field ``w`` of shape
``(2, H, W)``, the prox with radius ``t`` shrinks each pixel's 2-vector
``(w_x, w_y)`` toward the origin by ``t``; the residual ``I - prox`` is the
projection of each pixel pair onto the disc of radius ``t``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "prox_tv_isotropic",
    "residual_prox",
    "prox_oracle_1d",
    "tv_isotropic",
]


def _magnitude(w: np.ndarray) -> np.ndarray:
    return np.sqrt(w[0] ** 2 + w[1] ** 2)


def _check_t(t: float) -> float:
    t = float(t)
    if not t >= 0:
        raise ValueError("threshold t must be nonnegative")
    return t


def prox_tv_isotropic(v: np.ndarray, t: float) -> np.ndarray:
    """Per-pixel 2-vector shrinkage ``w * max(1 - t / |w|, 0)``.

    Pixels with ``|w| = 0`` map to exactly 0.
    """
    t = _check_t(t)
    v = np.asarray(v, dtype=float)
    if t == 0.0:
        return v.copy()
    r = _magnitude(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > t, 1.0 - t / r, 0.0)
    return v * scale


def residual_prox(v: np.ndarray, t: float) -> np.ndarray:
    """``v - prox_tv_isotropic(v, t)``; every pixel pair has magnitude ``<= t``."""
    t = _check_t(t)
    v = np.asarray(v, dtype=float)
    if t == 0.0:
        return np.zeros_like(v)
    r = _magnitude(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > t, t / r, 1.0)
    return v * scale


def tv_isotropic(p: np.ndarray) -> float:
    """Isotropic ``||p||_{1,2}``: sum over pixels of the pair magnitude."""
    return float(np.sum(_magnitude(np.asarray(p, dtype=float))))


def prox_oracle_1d(v, t: float, grid_step: float) -> np.ndarray:
    """Brute-force prox of ``t * ||x||_2`` at a single 2-vector ``v``.

    The minimizer of ``t||x|| + 0.5||x - v||^2`` lies on the segment from 0
    to ``v``; the objective is sampled there at spacing ``grid_step`` and the
    best sample returned.  Only for testing the closed form.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    v = np.asarray(v, dtype=float).reshape(2)
    t = float(t)
    if t == 0.0:
        return v.copy()
    r = float(np.hypot(v[0], v[1]))
    if r == 0.0:
        return np.zeros(2)
    s = np.arange(0.0, r + grid_step, grid_step)
    s = np.minimum(s, r)
    obj = t * s + 0.5 * (s - r) ** 2
    best = s[int(np.argmin(obj))]
    return v * (best / r)
