"""Error-bounded quantization and negabinary codewords."""

from __future__ import annotations

import numpy as np

__all__ = [
    "CODE_LIMIT",
    "dequantize",
    "from_negabinary",
    "quantize",
    "suffix_uncertainty",
    "to_negabinary",
    "truncate",
]

#: largest code magnitude; anything beyond is stored as an outlier
CODE_LIMIT = 1 << 30

_MASK = 0xAAAAAAAA  # negabinary digits with negative weight (odd positions)


def quantize(y, eb):
    """Quantize residuals ``y`` into bins of width ``2*eb``.

    Returns ``(codes, outliers)``: int64 codes rounded half away from zero,
    and a boolean mask of residuals that are non-finite or whose code would
    exceed :data:`CODE_LIMIT`.  Outlier codes are set to 0.
    """
    eb = np.asarray(eb, dtype=np.float64)
    if not np.all(eb > 0):
        raise ValueError("error bound must be positive")
    y = np.asarray(y, dtype=np.float64)
    with np.errstate(invalid="ignore", over="ignore"):
        scaled = y / (2 * eb)
        rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
        outliers = ~np.isfinite(rounded) | (np.abs(rounded) > CODE_LIMIT)
    codes = np.where(outliers, 0, rounded).astype(np.int64)
    return codes, outliers


def dequantize(q, eb):
    return np.asarray(q, dtype=np.float64) * (2 * eb)


def to_negabinary(q) -> np.ndarray:
    """Map signed codes to 32-digit base -2 codewords (``uint32``)."""
    q = np.asarray(q, dtype=np.int64)
    if q.size and np.abs(q).max() > CODE_LIMIT:
        raise ValueError(f"code magnitude exceeds {CODE_LIMIT}")
    return ((q + _MASK) ^ _MASK).astype(np.uint32)


def from_negabinary(codewords) -> np.ndarray:
    """Evaluate base -2 codewords back to signed ``int64`` codes."""
    c = np.asarray(codewords, dtype=np.uint32).astype(np.int64)
    return (c ^ _MASK) - _MASK


def truncate(codewords, discarded: int) -> np.ndarray:
    """Zero the ``discarded`` least significant digits of each codeword."""
    if not 0 <= discarded <= 32:
        raise ValueError(f"discarded digit count {discarded} outside 0..32")
    keep = (0xFFFFFFFF << discarded) & 0xFFFFFFFF
    return np.asarray(codewords, dtype=np.uint32) & np.uint32(keep)


def suffix_uncertainty(d: int) -> int:
    """Largest ``|value|`` of any ``d``-digit negabinary suffix.

    Equals ``(2/3)*2**d - 1/3`` for odd ``d`` and ``(2/3)*2**d - 2/3`` for even ``d``.
    """
    if not 0 <= d <= 32:
        raise ValueError(f"digit count {d} outside 0..32")
    if d % 2:
        return ((1 << (d + 1)) - 1) // 3
    return ((1 << (d + 1)) - 2) // 3
