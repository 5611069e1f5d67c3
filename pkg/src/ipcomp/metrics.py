"""Fidelity and size metrics for comparing a reconstruction with its original."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["bitrate", "compression_ratio", "metrics"]


def metrics(original, reconstructed) -> dict[str, float]:
    """Max absolute error, MSE and PSNR (``inf`` for a perfect match).

    PSNR is ``20 * log10(value_range / sqrt(mse))`` with the range taken from
    the original.
    """
    x = np.asarray(getattr(original, "values", original), dtype=np.float64).reshape(-1)
    y = np.asarray(getattr(reconstructed, "values", reconstructed), dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ValueError("cannot compare empty fields")
    diff = np.abs(x - y)
    max_err = float(diff.max())
    mse = float(np.mean(diff * diff))
    value_range = float(x.max() - x.min())
    if mse == 0:
        psnr = math.inf
    elif value_range == 0:
        psnr = -math.inf
    else:
        psnr = 20 * math.log10(value_range / math.sqrt(mse))
    return {"max_err": max_err, "mse": mse, "psnr": psnr}


def compression_ratio(original_bytes: int, compressed_bytes: int) -> float:
    return original_bytes / compressed_bytes


def bitrate(compressed_bytes: int, count: int) -> float:
    """Average stored bits per scalar."""
    return 8 * compressed_bytes / count
