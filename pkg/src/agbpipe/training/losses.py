"""Sparse-label losses. Invalid pixels contribute exactly nothing, in value
and in gradient: the squared residual is multiplied by a 0/1 mask before the
reduction, so mutating predictions or labels at invalid pixels leaves the
loss bit-identical."""

from __future__ import annotations

import numpy as np

from ..errors import EmptyLabelsError
from ..numcore import ops
from ..numcore.tensor import Tensor


def masked_rmse_loss(pred: Tensor, label, valid) -> Tensor:
    """sqrt(sum_valid((pred - label)^2) / n_valid) over a batch.

    pred: Tensor [B,1,T,T] or [B,T,T]; label: array/Tensor [B,T,T] (finite
    everywhere, including invalid pixels); valid: bool array [B,T,T].
    """
    valid = np.asarray(valid, dtype=bool)
    n = int(valid.sum())
    if n == 0:
        raise EmptyLabelsError("masked RMSE undefined: no valid pixels in batch")
    if pred.ndim == 4:
        if pred.shape[1] != 1:
            raise EmptyLabelsError(f"expected single-channel predictions, got {pred.shape}")
        pred = pred.reshape(pred.shape[0], pred.shape[2], pred.shape[3])
    lab = label if isinstance(label, Tensor) else Tensor(np.asarray(label, dtype=pred.dtype))
    mask = Tensor(valid.astype(pred.dtype))
    diff = pred - lab
    sq = diff * diff * mask
    return ops.sqrt(sq.sum() / float(n))
