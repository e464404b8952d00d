"""Smooth data-fidelity terms and their gradients.

Two models are provided:

* :class:`GaussianFidelity` -- ``0.5 * ||K u - b||^2`` for additive white
  Gaussian noise.
* :class:`RayleighFidelity` -- ``sum_i (b - K u)_i^2 / (K u)_i`` for the
  signal-dependent model ``b = K u + sqrt(K u) * n``.  The denominator is
  clamped from below at ``floor`` so the value and gradient stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import SpectralOperator

__all__ = [
    "GaussianFidelity",
    "RayleighFidelity",
    "gaussian_value",
    "gaussian_gradient",
    "rayleigh_value",
    "rayleigh_gradient",
    "estimate_beta",
    "DEFAULT_FLOOR",
]

DEFAULT_FLOOR = 1e-3


def _check_shape(K: SpectralOperator, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != K.shape:
        raise ValueError(f"shape mismatch: operator {K.shape}, image {u.shape}")
    return u


@dataclass(frozen=True)
class GaussianFidelity:
    K: SpectralOperator
    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        if b.shape != self.K.shape:
            raise ValueError(f"shape mismatch: operator {self.K.shape}, data {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        # K^T b is reused by every gradient evaluation.
        ktb = self.K.adjoint().apply(b)
        ktb.setflags(write=False)
        object.__setattr__(self, "_ktb", ktb)
        object.__setattr__(self, "_normal", self.K.normal())

    mode = "gaussian"

    def value(self, u: np.ndarray) -> float:
        u = _check_shape(self.K, u)
        r = self.K.apply(u) - self.b
        return 0.5 * float(np.sum(r * r))

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """``K^T (K u - b)``."""
        u = _check_shape(self.K, u)
        return self._normal.apply(u) - self._ktb


@dataclass(frozen=True)
class RayleighFidelity:
    K: SpectralOperator
    b: np.ndarray
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        if b.shape != self.K.shape:
            raise ValueError(f"shape mismatch: operator {self.K.shape}, data {b.shape}")
        if self.floor <= 0:
            raise ValueError("floor must be positive")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_Kt", self.K.adjoint())

    mode = "rayleigh"

    def _clamped(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ku = self.K.apply(_check_shape(self.K, u))
        return ku, np.maximum(ku, self.floor)

    def value(self, u: np.ndarray) -> float:
        ku, z = self._clamped(u)
        return float(np.sum((self.b - ku) ** 2 / z))

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """``K^T (1 - b^2 / (K u)^2)`` with ``K u`` clamped at ``floor``."""
        _, z = self._clamped(u)
        return self._Kt.apply(1.0 - (self.b / z) ** 2)

    def hessian_weight(self, u: np.ndarray) -> np.ndarray:
        """Diagonal ``2 b^2 / (K u)^3`` of the Hessian ``K^T diag(.) K``."""
        _, z = self._clamped(u)
        return 2.0 * self.b**2 / z**3


def gaussian_value(F: GaussianFidelity, u: np.ndarray) -> float:
    return F.value(u)


def gaussian_gradient(F: GaussianFidelity, u: np.ndarray) -> np.ndarray:
    return F.gradient(u)


def rayleigh_value(F: RayleighFidelity, u: np.ndarray) -> float:
    return F.value(u)


def rayleigh_gradient(F: RayleighFidelity, u: np.ndarray) -> np.ndarray:
    return F.gradient(u)


def estimate_beta(F, box: tuple[float, float] = (0.0, 255.0)) -> float:
    """Co-coercivity constant ``beta`` of ``grad f2`` (``grad f2`` is ``1/beta``-Lipschitz).

    Gaussian: exact, ``1 / lambda_max(K^T K)``.

    Rayleigh: ``1 / (2 lambda_max(K^T K) max(b^2) / zmin^3)`` where ``zmin`` is
    the lower end of ``box`` (the range assumed for ``K u``) clamped at the
    fidelity floor.  This bounds the Hessian only for iterates whose blurred
    values stay in the box, and the Rayleigh term need not be convex, so the
    result is an estimate rather than a certificate.
    """
    lo, hi = (float(x) for x in box)
    if not lo <= hi:
        raise ValueError(f"empty value box {box!r}")
    lam_ktk = float(np.max(np.abs(F.K.transfer)) ** 2)
    if lam_ktk == 0.0:
        return np.inf
    if isinstance(F, GaussianFidelity):
        return 1.0 / lam_ktk
    if isinstance(F, RayleighFidelity):
        zmin = max(lo, F.floor)
        bmax2 = float(np.max(F.b**2))
        return 1.0 / (2.0 * lam_ktk * bmax2 / zmin**3)
    raise TypeError(f"unsupported fidelity {type(F).__name__}")
