"""Binary PGM (P5) reading and writing, plus raw float64 sidecars."""

from __future__ import annotations

import numpy as np

__all__ = ["PGMFormatError", "read_pgm", "write_pgm", "write_raw", "read_raw"]


class PGMFormatError(OSError):
    """Malformed or unsupported PGM file."""


def _tokens(data: bytes, count: int):
    """Parse ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise PGMFormatError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    return tokens, i + 1


def read_pgm(path) -> np.ndarray:
    """Read an 8- or 16-bit binary PGM as a float array."""
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), offset = _tokens(data, 4)
    if magic != b"P5":
        raise PGMFormatError(f"{path}: not a binary PGM (magic {magic!r})")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise PGMFormatError(f"{path}: non-numeric PGM header") from None
    if not 0 < maxval < 65536:
        raise PGMFormatError(f"{path}: invalid maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    raster = data[offset : offset + need]
    if len(raster) != need:
        raise PGMFormatError(f"{path}: truncated raster")
    return np.frombuffer(raster, dtype=dtype).reshape(h, w).astype(float)


def write_pgm(path, image, maxval: int = 255) -> None:
    """Write ``image`` rounded and clipped to ``[0, maxval]``."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must lie in [1, 65535]")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    q = np.clip(np.rint(np.nan_to_num(img)), 0, maxval).astype(dtype)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(q.tobytes())


def write_raw(path, image) -> None:
    """Little-endian float64 raster, row-major, no header."""
    np.asarray(image, dtype="<f8").tofile(path)


def read_raw(path, shape) -> np.ndarray:
    return np.fromfile(path, dtype="<f8").reshape(shape)
