"""Scalar fields and their stride-level decomposition.

A grid of extent ``dims`` is split into ``L`` disjoint levels.  Level ``L``
holds the anchors (every coordinate a multiple of ``2**(L-1)``); each finer
level ``l`` holds the points first reached at stride ``s = 2**(l-1)``, visited
in one pass per dimension.  Encoder and decoder both walk the grid through
:func:`level_passes`, so the order defined here is part of the file format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

__all__ = [
    "DEFAULT_ANCHOR_CAP",
    "FieldGrid",
    "Pass",
    "SCALAR_KINDS",
    "enumerate_level",
    "level_count",
    "level_passes",
    "level_size",
]

DEFAULT_ANCHOR_CAP = 64
MAX_DIMS = 4

SCALAR_KINDS = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


def _check_dims(dims) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not 1 <= len(dims) <= MAX_DIMS:
        raise ValueError(f"expected 1 to {MAX_DIMS} dimensions, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ValueError(f"all extents must be positive, got {dims}")
    return dims


@dataclass(frozen=True)
class FieldGrid:
    """An n-dimensional field stored as a flat row-major array."""

    dims: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        values = np.ascontiguousarray(self.values).reshape(-1)
        if values.dtype not in (np.float32, np.float64):
            raise TypeError(f"unsupported scalar type {values.dtype}")
        if values.size != math.prod(dims):
            raise ValueError(
                f"{values.size} values do not fill a grid of shape {dims}"
            )
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, array) -> "FieldGrid":
        array = np.asarray(array)
        if array.dtype not in (np.float32, np.float64):
            array = array.astype(np.float64)
        return cls(array.shape, array.reshape(-1))

    @property
    def scalar_kind(self) -> str:
        return "f32" if self.values.dtype == np.float32 else "f64"

    @property
    def size(self) -> int:
        return self.values.size

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.dims)

    def tobytes(self) -> bytes:
        return self.values.astype(SCALAR_KINDS[self.scalar_kind], copy=False).tobytes()

    @classmethod
    def frombytes(cls, data: bytes, dims, scalar_kind: str) -> "FieldGrid":
        dtype = SCALAR_KINDS[scalar_kind]
        dims = _check_dims(dims)
        expected = math.prod(dims) * dtype.itemsize
        if len(data) != expected:
            raise ValueError(
                f"raw field holds {len(data)} bytes, expected {expected} "
                f"for {dims} {scalar_kind}"
            )
        values = np.frombuffer(data, dtype=dtype).astype(dtype.newbyteorder("="))
        return cls(dims, values)


def level_count(dims, anchor_cap: int = DEFAULT_ANCHOR_CAP) -> int:
    """Number of levels for a grid; the anchor stride ``2**(L-1)`` never exceeds ``anchor_cap``."""
    dims = _check_dims(dims)
    if anchor_cap < 1 or anchor_cap & (anchor_cap - 1):
        raise ValueError(f"anchor cap must be a power of two, got {anchor_cap}")
    max_levels = anchor_cap.bit_length()
    levels = math.ceil(math.log2(max(dims))) if max(dims) > 1 else 1
    return max(1, min(levels, max_levels))


@dataclass(frozen=True)
class Pass:
    """One interpolation sweep: the points of ``level`` predicted along ``axis``.

    ``axis`` is ``None`` for the anchor level, which is predicted from zero.
    ``slices`` selects the target points out of the full grid.
    """

    level: int
    axis: int | None
    stride: int
    slices: tuple[slice, ...]
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def source_slices(self) -> tuple[slice, ...]:
        """Slices selecting the lattice the pass interpolates along (full extent on ``axis``)."""
        return tuple(
            slice(None) if i == self.axis else sl for i, sl in enumerate(self.slices)
        )


def _extent(n: int, start: int, step: int) -> int:
    return 0 if start >= n else (n - 1 - start) // step + 1


def level_passes(dims, level: int, levels: int | None = None) -> Iterator[Pass]:
    """Yield the non-empty passes of ``level`` in traversal order."""
    dims = _check_dims(dims)
    if levels is None:
        levels = level_count(dims)
    if not 1 <= level <= levels:
        raise ValueError(f"level {level} outside 1..{levels}")
    if level == levels:
        stride = 1 << (levels - 1)
        slices = tuple(slice(0, None, stride) for _ in dims)
        shape = tuple(_extent(n, 0, stride) for n in dims)
        yield Pass(level, None, stride, slices, shape)
        return
    s = 1 << (level - 1)
    for axis in range(len(dims)):
        slices, shape = [], []
        for i, n in enumerate(dims):
            if i < axis:
                start, step = 0, s
            elif i == axis:
                start, step = s, 2 * s
            else:
                start, step = 0, 2 * s
            slices.append(slice(start, None, step))
            shape.append(_extent(n, start, step))
        if math.prod(shape):
            yield Pass(level, axis, s, tuple(slices), tuple(shape))


def level_size(dims, level: int, levels: int | None = None) -> int:
    return sum(p.size for p in level_passes(dims, level, levels))


def enumerate_level(dims, level: int, levels: int | None = None) -> list[list[tuple[int, ...]]]:
    """Coordinates of ``level`` grouped by pass, each pass in row-major order."""
    out = []
    for p in level_passes(dims, level, levels):
        axes = [range(n)[sl] for n, sl in zip(_check_dims(dims), p.slices)]
        grids = np.meshgrid(*[np.asarray(a) for a in axes], indexing="ij")
        coords = np.stack([g.reshape(-1) for g in grids], axis=1)
        out.append([tuple(int(c) for c in row) for row in coords])
    return out
