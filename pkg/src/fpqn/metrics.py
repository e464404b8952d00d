"""Image quality metrics."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["psnr", "PSNR_CAP"]

PSNR_CAP = 200.0


def psnr(u, u_ref) -> float:
    """``10 log10(255^2 N / ||u - u_ref||^2)`` in dB, capped at ``PSNR_CAP``.

    Identical images return the cap.
    """
    u = np.asarray(u, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    if u.shape != u_ref.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {u_ref.shape}")
    err = float(np.sum((u - u_ref) ** 2))
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0**2 * u.size / err))
