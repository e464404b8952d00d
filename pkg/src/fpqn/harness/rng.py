"""Portable, seeded noise generation.

Uniform doubles come from numpy's PCG64 bit generator, seeded through a
``SeedSequence`` built from ``(seed, stream)``.  Normal deviates are
produced from those uniforms by the Box-Muller transform, so the sequence is
fully determined by the PCG64 uniform stream and reproducible wherever
PCG64 and IEEE doubles are available.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["make_rng", "box_muller_normal", "stream_id"]


def stream_id(name) -> int:
    """Stable 32-bit id for a stream label (``str`` hash is salted per process)."""
    return zlib.crc32(str(name).encode("utf-8"))


def make_rng(seed: int, stream=0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), stream_id(stream)])))


def box_muller_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal deviates of ``shape`` from pairs of uniforms.

    Each pair ``(u1, u2)`` with ``u1`` in ``(0, 1]`` yields
    ``sqrt(-2 ln u1) * (cos 2 pi u2, sin 2 pi u2)``; outputs are taken in
    that interleaved order.
    """
    n = int(np.prod(shape))
    m = (n + 1) // 2
    u = rng.random((m, 2))
    u1 = 1.0 - u[:, 0]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u[:, 1]
    z = np.empty((m, 2))
    z[:, 0] = radius * np.cos(angle)
    z[:, 1] = radius * np.sin(angle)
    return z.reshape(-1)[:n].reshape(shape)
