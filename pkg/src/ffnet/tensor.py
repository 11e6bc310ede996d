"""Rank-4 tensor helpers.

Tensors are plain ``numpy.ndarray`` objects with layout ``(n, c, h, w)`` in
C (row-major) order.  The helpers here validate shapes strictly; nothing in
the engine relies on implicit broadcasting between activations.

Random fills use :func:`make_rng`, a PCG64 bit generator seeded from a
64-bit unsigned integer, with NumPy's ziggurat normal transform.  For a
given NumPy release the stream is identical on every platform.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import RangeError, ShapeError, SizeError

DEFAULT_DTYPE = np.float32
_MAX_ELEMENTS = np.iinfo(np.intp).max


class Shape(NamedTuple):
    n: int
    c: int
    h: int
    w: int

    @property
    def size(self) -> int:
        return self.n * self.c * self.h * self.w


def make_shape(n, c, h, w) -> Shape:
    dims = tuple(int(d) for d in (n, c, h, w))
    if any(d < 1 for d in dims):
        raise SizeError(f"all extents must be >= 1, got {dims}")
    count = 1
    for d in dims:
        count *= d
    if count > _MAX_ELEMENTS:
        raise SizeError(f"element count {count} overflows the index range")
    return Shape(*dims)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit unsigned seed."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def tensor_new(shape, fill=0.0, rng: np.random.Generator | None = None,
               mean: float = 0.0, std: float = 1.0, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Allocate a tensor filled with a constant or with normal variates.

    ``fill`` is either a number (constant fill) or the string ``"normal"``,
    in which case ``rng`` is required and ``mean``/``std`` parametrize the
    distribution.  Normal samples are drawn in float64 then cast, so the
    consumed stream does not depend on ``dtype``.
    """
    shape = make_shape(*shape)
    if isinstance(fill, str):
        if fill != "normal":
            raise ValueError(f"unknown fill {fill!r}")
        if rng is None:
            raise ValueError("normal fill needs an rng")
        data = rng.standard_normal(shape.size) * std + mean
        return data.reshape(shape).astype(dtype)
    return np.full(shape, fill, dtype=dtype)


def check_rank4(t: np.ndarray, name: str = "tensor") -> Shape:
    if t.ndim != 4:
        raise ShapeError(f"{name} must be rank 4 (n, c, h, w), got shape {t.shape}")
    return Shape(*t.shape)


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stack ``b``'s channels after ``a``'s."""
    sa, sb = check_rank4(a, "a"), check_rank4(b, "b")
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w):
        raise ShapeError(f"cannot concatenate {tuple(sa)} with {tuple(sb)}")
    if a.dtype != b.dtype:
        raise ShapeError(f"dtype mismatch {a.dtype} vs {b.dtype}")
    return np.concatenate([a, b], axis=1)


def slice_channels(t: np.ndarray, start: int, stop: int) -> np.ndarray:
    s = check_rank4(t)
    if not 0 <= start < stop <= s.c:
        raise RangeError(f"channel range [{start}, {stop}) outside [0, {s.c})")
    return np.ascontiguousarray(t[:, start:stop])


def crop(t: np.ndarray, top: int, left: int, out_h: int, out_w: int) -> np.ndarray:
    s = check_rank4(t)
    if top < 0 or left < 0 or out_h < 1 or out_w < 1 or top + out_h > s.h or left + out_w > s.w:
        raise RangeError(
            f"crop window (top={top}, left={left}, {out_h}x{out_w}) outside {s.h}x{s.w}"
        )
    return np.ascontiguousarray(t[:, :, top:top + out_h, left:left + out_w])


def pad_spatial(t: np.ndarray, pad: int, mode: str = "constant") -> np.ndarray:
    check_rank4(t)
    if pad == 0:
        return t
    return np.pad(t, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode=mode)


def flip_horizontal(t: np.ndarray) -> np.ndarray:
    check_rank4(t)
    return np.ascontiguousarray(t[..., ::-1])
