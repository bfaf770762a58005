"""Bias-corrected Adam with per-parameter moment state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument, TrainingFault
from .tensor import Tensor


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState, lr: float) -> AdamState:
    """One update over every named parameter. Parameter buffers are replaced,
    never mutated, so tensors captured by earlier graphs stay valid."""
    if lr <= 0:
        raise InvalidArgument("learning rate must be positive")
    state.t += 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if np.isnan(g).any():
            raise TrainingFault(f"NaN gradient for parameter {name!r} at step {state.t}")
        dt = p.dtype.type
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m[...] = dt(b1) * m + dt(1.0 - b1) * g
        v[...] = dt(b2) * v + dt(1.0 - b2) * (g * g)
        mhat = m / dt(c1)
        vhat = v / dt(c2)
        p.data = p.data - dt(lr) * mhat / (np.sqrt(vhat) + dt(eps))
    return state


class Adam:
    """Optimizer bound to a named parameter dict; skips non-trainable entries."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.state = AdamState(beta1=beta1, beta2=beta2, eps=eps)

    def step(self, lr: float) -> None:
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
