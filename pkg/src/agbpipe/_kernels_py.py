"""Pure-numpy implementations of the hot kernels.

Semantics are defined here; the compiled twin in ``_ckernels.pyx`` must match
these results bit for bit (same gather order, same accumulation order per
output element, same float width for the median midpoint).
"""

from __future__ import annotations

import numpy as np


def conv_out_hw(H: int, W: int, kh: int, kw: int, stride: int, pad: int) -> tuple[int, int]:
    return (H + 2 * pad - kh) // stride + 1, (W + 2 * pad - kw) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Gather conv patches: [B,C,H,W] -> [B, C*kh*kw, Ho*Wo]."""
    B, C, H, W = x.shape
    Ho, Wo = conv_out_hw(H, W, kh, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((B, C * kh * kw, Ho * Wo), dtype=x.dtype)
    view = cols.reshape(B, C, kh, kw, Ho, Wo)
    for i in range(kh):
        for j in range(kw):
            view[:, :, i, j] = xp[:, :, i : i + Ho * stride : stride, j : j + Wo * stride : stride]
    return cols


def col2im(cols: np.ndarray, B: int, C: int, H: int, W: int, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add patches back: [B, C*kh*kw, Ho*Wo] -> [B,C,H,W].

    Accumulation order per output element is kernel-offset row-major (i, then j).
    """
    Ho, Wo = conv_out_hw(H, W, kh, kw, stride, pad)
    xp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    view = cols.reshape(B, C, kh, kw, Ho, Wo)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + Ho * stride : stride, j : j + Wo * stride : stride] += view[:, :, i, j]
    if pad:
        return np.ascontiguousarray(xp[:, :, pad : pad + H, pad : pad + W])
    return xp


def masked_median(vals: np.ndarray, valid: np.ndarray, fill: float) -> np.ndarray:
    """Column-wise median of the valid entries of vals [S, N].

    Even counts take the mean of the two middle values, computed at the input
    float width. Columns with no valid entry get ``fill``.
    """
    dt = vals.dtype.type
    big = np.where(valid, vals, np.inf).astype(vals.dtype, copy=False)
    big = np.sort(big, axis=0)
    n = valid.sum(axis=0)
    idx = np.arange(vals.shape[1])
    lo = big[np.maximum(n - 1, 0) // 2, idx]
    hi = big[n // 2, idx]
    with np.errstate(invalid="ignore"):
        med = (lo + hi) * dt(0.5)
    return np.where(n > 0, med, dt(fill)).astype(vals.dtype, copy=False)
