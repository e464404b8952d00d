"""Built-in synthetic ground truth images."""

from __future__ import annotations

import numpy as np

__all__ = ["phantom"]


def phantom(n: int = 256) -> np.ndarray:
    """Piecewise-constant shapes over a smooth ramp, values in ``[20, 240]``.

    Geometry is defined in unit coordinates so every size shows the same
    scene: a ring, a rectangle, a rotated ellipse, a triangle, a bar
    pattern of decreasing width and a row of small dots.
    """
    if n < 8:
        raise ValueError("phantom size must be at least 8")
    y, x = (np.mgrid[0:n, 0:n] + 0.5) / n
    u = 40.0 + 60.0 * x + 40.0 * y

    r2 = (x - 0.30) ** 2 + (y - 0.32) ** 2
    u[r2 < 0.20**2] = 200.0
    u[r2 < 0.08**2] = 70.0

    u[(x > 0.60) & (x < 0.90) & (y > 0.08) & (y < 0.36)] = 120.0

    c, s = np.cos(0.6), np.sin(0.6)
    xr = (x - 0.72) * c + (y - 0.62) * s
    yr = -(x - 0.72) * s + (y - 0.62) * c
    u[(xr / 0.16) ** 2 + (yr / 0.07) ** 2 < 1.0] = 170.0

    tri = (y > 0.60) & (y < 0.92) & (np.abs(x - 0.22) < 0.5 * (y - 0.60))
    u[tri] = 95.0

    # bar pattern: widths halve from left to right
    x0 = 0.45
    for width in (0.04, 0.02, 0.01, 0.005):
        for _ in range(3):
            u[(x >= x0) & (x < x0 + width) & (y > 0.44) & (y < 0.56)] = 235.0
            x0 += 2.0 * width

    for k in range(6):
        cx = 0.40 + 0.08 * k
        u[(x - cx) ** 2 + (y - 0.93) ** 2 < 0.015**2] = 25.0

    return u
