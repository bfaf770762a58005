"""Losses, schedules, and the three training loops."""

from .losses import masked_rmse_loss
from .schedule import FinetuneConfig, PretrainConfig, BaselineConfig, lr_schedule
from .history import TrainHistory
from .loops import train_pretrain, train_finetune, train_baseline, predict_tiles, pooled_validation_rmse

__all__ = [
    "masked_rmse_loss",
    "FinetuneConfig", "PretrainConfig", "BaselineConfig", "lr_schedule",
    "TrainHistory",
    "train_pretrain", "train_finetune", "train_baseline", "predict_tiles", "pooled_validation_rmse",
]
