"""Interpolation predictors for the level passes.

Predictions work on three kinds of state arrays:

* floating point, using the plain interpolation weights;
* ``int64`` or Python-int ``object`` arrays holding fixed-point values
  scaled by ``2**frac_bits``, where the weights become exact shifts.

The fixed-point path is what compression and reconstruction use, which keeps
every reconstruction an exact linear function of the quantization codes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Pass, level_passes

__all__ = [
    "CUBIC",
    "INTERP_KINDS",
    "InterpKind",
    "LINEAR",
    "predict_cubic",
    "predict_level",
    "predict_linear",
    "predict_pass",
]


@dataclass(frozen=True)
class InterpKind:
    name: str
    code: int
    #: infinity norm of the interpolation operator (sum of |weights|)
    amplification: float
    #: fractional bits a single pass adds to a fixed-point value
    pass_bits: int

    @classmethod
    def parse(cls, value) -> "InterpKind":
        if isinstance(value, InterpKind):
            return value
        for kind in INTERP_KINDS:
            if value in (kind.name, kind.code):
                return kind
        raise ValueError(f"unknown interpolation kind {value!r}")


LINEAR = InterpKind("linear", 0, 1.0, 1)
CUBIC = InterpKind("cubic", 1, 1.25, 4)
INTERP_KINDS = (LINEAR, CUBIC)


def predict_linear(a, b):
    """Midpoint of the two distance-``s`` neighbours."""
    return (a + b) * 0.5


def predict_cubic(a, b, c, d):
    """Four-point cubic estimate from neighbours at ``-3s, -s, +s, +3s``."""
    return (9 * (b + c) - (a + d)) / 16


def _is_exact(values: np.ndarray) -> bool:
    return values.dtype == object or np.issubdtype(values.dtype, np.integer)


def predict_pass(values: np.ndarray, p: Pass, kind: InterpKind) -> np.ndarray:
    """Predict the targets of pass ``p`` from the current state ``values``.

    ``values`` has the grid shape, optionally preceded by batch axes.  The
    result has shape ``batch + p.shape``.  Near the boundary cubic falls back
    to linear, and linear to copying the lower neighbour.
    """
    nb = values.ndim - len(p.slices)
    batch = values.shape[:nb]
    if p.axis is None:
        if values.dtype == object:
            out = np.empty(batch + p.shape, dtype=object)
            out.fill(0)
            return out
        return np.zeros(batch + p.shape, dtype=values.dtype)

    axis = nb + p.axis
    sl = list(p.slices)
    sl[p.axis] = slice(0, None, 2 * p.stride)
    # known points on the pass axis: target i sits between known[i] and known[i + 1]
    known = values[(Ellipsis,) + tuple(sl)]
    m = known.shape[axis]
    nt = p.shape[p.axis]

    def along(start, stop):
        index = [slice(None)] * known.ndim
        index[axis] = slice(start, stop)
        return tuple(index)

    exact = _is_exact(values)
    out = np.empty(batch + p.shape, dtype=values.dtype)
    linear_end = m - 1  # targets [0, m - 1) have both distance-s neighbours
    if kind is CUBIC and m >= 4:
        a, b, c, d = (known[along(k, m - 3 + k)] for k in range(4))
        if exact:
            out[along(1, m - 2)] = (9 * (b + c) - a - d) >> 4
        else:
            out[along(1, m - 2)] = predict_cubic(a, b, c, d)
        spans = [(0, 1), (m - 2, m - 1)]
    else:
        spans = [(0, linear_end)]
    for lo, hi in spans:
        if hi > lo:
            a, b = known[along(lo, hi)], known[along(lo + 1, hi + 1)]
            out[along(lo, hi)] = (a + b) >> 1 if exact else predict_linear(a, b)
    if nt == m:
        out[along(m - 1, m)] = known[along(m - 1, m)]
    return out


def predict_level(values: np.ndarray, level: int, kind: InterpKind, levels: int | None = None) -> np.ndarray:
    """Predictions for every point of ``level`` in traversal order.

    ``values`` must already hold the coarser levels and this level's earlier
    passes; each pass is predicted from the state as given.
    """
    dims = values.shape
    parts = [
        predict_pass(values, p, kind).reshape(-1)
        for p in level_passes(dims, level, levels)
    ]
    if not parts:
        return np.zeros(0, dtype=values.dtype)
    return np.concatenate(parts)
