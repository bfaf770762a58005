"""Training configs and the warmup-plus-cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from ..errors import InvalidArgument


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 100
    max_lr: float = 2e-4
    warmup_epochs: int = 10
    batch_size: Optional[int] = None  # resolved per model preset: 8 toy, 16 paper
    seed: int = 0
    grad_clip: Optional[float] = None

    def __post_init__(self):
        if self.warmup_epochs >= self.epochs:
            raise InvalidArgument("warmup must be shorter than the run")
        if self.max_lr <= 0:
            raise InvalidArgument("max_lr must be positive")

    def resolved_batch(self, preset: str) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 16 if preset == "paper" else 8


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 50
    max_lr: float = 1e-4
    warmup_epochs: int = 5
    batch_size: int = 8
    seed: int = 0
    grad_clip: Optional[float] = None

    def __post_init__(self):
        if self.warmup_epochs >= self.epochs:
            raise InvalidArgument("warmup must be shorter than the run")
        if self.max_lr <= 0:
            raise InvalidArgument("max_lr must be positive")


@dataclass(frozen=True)
class BaselineConfig:
    epochs: int = 100
    lr: float = 0.01
    batch_size: int = 128
    seed: int = 0
    grad_clip: Optional[float] = None

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidArgument("learning rate must be positive")


def lr_schedule(epoch: int, epochs: int, max_lr: float, warmup_epochs: int) -> float:
    """Linear warmup to max_lr, then cosine decay to zero at a virtual final
    epoch. Constant within an epoch; max_lr is attained at epochs
    warmup_epochs - 1 and warmup_epochs."""
    if not (0 <= epoch < epochs):
        raise InvalidArgument(f"epoch {epoch} outside [0, {epochs})")
    if epoch < warmup_epochs:
        return max_lr * (epoch + 1) / warmup_epochs
    return 0.5 * max_lr * (1.0 + math.cos(math.pi * (epoch - warmup_epochs) / (epochs - warmup_epochs)))
