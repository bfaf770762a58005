"""The three training loops: pretraining, frozen-encoder fine-tuning, baseline.

All loops are deterministic under (seed, config, dataset): sample order comes
from keyed substreams per epoch, masks from keyed substreams per (epoch,
sample), and every reduction runs in a fixed order. Histories record one row
per epoch; the wall-time column is excluded from the determinism contract.
"""

from __future__ import annotations

import logging
import math
import time
from typing import Optional

import numpy as np

from ..errors import InvalidArgument, TrainingFault
from ..models.params import ModelParams, freeze_encoder
from ..models.simmim import SimMIMPretrainer, sample_patch_mask
from ..numcore.optim import Adam
from ..numcore.rng import Prng
from ..numcore.tensor import Tensor, no_grad
from .history import TrainHistory
from .losses import masked_rmse_loss
from .schedule import BaselineConfig, FinetuneConfig, PretrainConfig, lr_schedule

log = logging.getLogger(__name__)

_K_ORDER = 0xD0
_K_MASK = 0xD1


def _stack_images(tiles) -> np.ndarray:
    return np.stack([t.image for t in tiles])


def _stack_labels(tiles) -> tuple[np.ndarray, np.ndarray]:
    labels = np.stack([np.where(t.valid, t.label, 0.0).astype(np.float32) for t in tiles])
    valids = np.stack([t.valid for t in tiles])
    return labels, valids


def _epoch_batches(n: int, batch: int, order: np.ndarray):
    for i in range(0, n, batch):
        yield order[i : i + batch]


def _clip_grads(params: dict, max_norm: Optional[float]) -> None:
    if max_norm is None:
        return
    total = math.sqrt(sum(float((p.grad**2).sum()) for p in params.values() if p.grad is not None))
    if total > max_norm:
        scale = np.float32(max_norm / (total + 1e-12))
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale


def _check_finite(value: float, epoch: int, step: int) -> None:
    if not math.isfinite(value):
        raise TrainingFault(f"non-finite loss at epoch {epoch} step {step}")


def _snapshot(mp: ModelParams) -> dict[str, np.ndarray]:
    return {n: t.data.copy() for n, t in mp.tensors.items()}


def _restore(mp: ModelParams, snap: dict[str, np.ndarray]) -> None:
    for n, arr in snap.items():
        mp.tensors[n].data = arr


def pooled_validation_rmse(model, tiles, batch: int) -> float:
    """Masked RMSE pooled over all valid pixels of the given tiles."""
    sq, n = 0.0, 0
    with no_grad():
        for i in range(0, len(tiles), batch):
            chunk = tiles[i : i + batch]
            pred = model(Tensor(_stack_images(chunk))).data[:, 0]
            labels, valids = _stack_labels(chunk)
            d = (pred - labels) * valids
            sq += float((d.astype(np.float64) ** 2).sum())
            n += int(valids.sum())
    return math.sqrt(sq / n) if n else math.nan


def predict_tiles(model, tiles, batch: int = 8) -> dict[str, np.ndarray]:
    out = {}
    with no_grad():
        for i in range(0, len(tiles), batch):
            chunk = tiles[i : i + batch]
            pred = model(Tensor(_stack_images(chunk))).data[:, 0]
            for t, p in zip(chunk, pred):
                out[t.tile_id] = p.copy()
    return out


def train_pretrain(model: SimMIMPretrainer, mp: ModelParams, tiles, cfg: PretrainConfig) -> TrainHistory:
    """Masked-reconstruction pretraining; fresh masks per sample per epoch."""
    if not tiles:
        raise InvalidArgument("pretraining dataset is empty")
    rng = Prng(cfg.seed)
    opt = Adam(mp.trainable_tensors())
    hist = TrainHistory()
    T = tiles[0].size
    grid = model.mask_grid((T, T))
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = lr_schedule(epoch, cfg.epochs, cfg.max_lr, cfg.warmup_epochs)
        order = rng.child(_K_ORDER, epoch).permutation(len(tiles))
        num, den = 0.0, 0.0
        for step, idx in enumerate(_epoch_batches(len(tiles), cfg.batch_size, order)):
            chunk = [tiles[int(i)] for i in idx]
            masks = np.stack(
                [sample_patch_mask(rng.child(_K_MASK, epoch, int(i)), grid, model.cfg.mask_ratio) for i in idx]
            )
            images = Tensor(_stack_images(chunk))
            opt.zero_grad()
            _, loss = model(images, masks)
            val = float(loss.data)
            _check_finite(val, epoch, step)
            loss.backward()
            _clip_grads(opt.params, cfg.grad_clip)
            opt.step(lr)
            w = float(masks.sum()) * model.cfg.mask_patch_size**2 * images.shape[1]
            num += val * w
            den += w
        hist.append(epoch, lr, num / den, None, time.perf_counter() - t0)
    return hist


def _supervised_loop(model, mp, ft_tiles, val_tiles, epochs, lr_fn, batch, seed, grad_clip) -> TrainHistory:
    rng = Prng(seed)
    opt = Adam(mp.trainable_tensors())
    hist = TrainHistory()
    best_val, best_snap = math.inf, None
    for epoch in range(epochs):
        t0 = time.perf_counter()
        lr = lr_fn(epoch)
        order = rng.child(_K_ORDER, epoch).permutation(len(ft_tiles))
        sq, n = 0.0, 0
        for step, idx in enumerate(_epoch_batches(len(ft_tiles), batch, order)):
            chunk = [ft_tiles[int(i)] for i in idx]
            labels, valids = _stack_labels(chunk)
            opt.zero_grad()
            pred = model(Tensor(_stack_images(chunk)))
            loss = masked_rmse_loss(pred, labels, valids)
            val = float(loss.data)
            _check_finite(val, epoch, step)
            loss.backward()
            _clip_grads(opt.params, grad_clip)
            opt.step(lr)
            k = int(valids.sum())
            sq += val * val * k
            n += k
        val_loss = pooled_validation_rmse(model, val_tiles, batch) if val_tiles else None
        if val_loss is not None and val_loss < best_val:
            best_val, best_snap = val_loss, _snapshot(mp)
        hist.append(epoch, lr, math.sqrt(sq / n), val_loss, time.perf_counter() - t0)
    if best_snap is not None:
        _restore(mp, best_snap)
    return hist


def train_finetune(model, mp: ModelParams, ft_tiles, val_tiles, cfg: FinetuneConfig, preset: str = "toy") -> TrainHistory:
    """Frozen-encoder fine-tuning with the warmup-plus-cosine schedule.

    The encoder is frozen before the first step; the model left in `mp` at
    return is the best-validation one (final when there is no validation
    split)."""
    if not ft_tiles:
        raise InvalidArgument("finetune split is empty")
    freeze_encoder(mp)
    batch = cfg.resolved_batch(preset)
    return _supervised_loop(
        model, mp, ft_tiles, val_tiles, cfg.epochs,
        lambda e: lr_schedule(e, cfg.epochs, cfg.max_lr, cfg.warmup_epochs),
        batch, cfg.seed, cfg.grad_clip,
    )


def train_baseline(model, mp: ModelParams, ft_tiles, val_tiles, cfg: BaselineConfig) -> TrainHistory:
    """From-scratch baseline training at a constant learning rate."""
    if not ft_tiles:
        raise InvalidArgument("finetune split is empty")
    batch = cfg.batch_size
    if batch > len(ft_tiles):
        log.warning("batch size %d exceeds dataset size %d; clamping", batch, len(ft_tiles))
        batch = len(ft_tiles)
    return _supervised_loop(model, mp, ft_tiles, val_tiles, cfg.epochs, lambda e: cfg.lr, batch, cfg.seed, cfg.grad_clip)
