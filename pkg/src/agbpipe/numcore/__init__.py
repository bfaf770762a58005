"""Numeric substrate: tensors with reverse-mode differentiation, ops, Adam, PRNG."""

from .tensor import Tensor, Graph, no_grad, is_grad_enabled
from .rng import Prng
from .optim import Adam, AdamState, adam_step
from . import ops

__all__ = ["Tensor", "Graph", "no_grad", "is_grad_enabled", "Prng", "Adam", "AdamState", "adam_step", "ops"]
