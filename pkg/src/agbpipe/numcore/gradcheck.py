"""Central finite-difference checking for ops and whole models.

All checks run in float64. For each checked tensor a deterministic sample of
coordinates is perturbed by +-h and the two-sided difference quotient is
compared against the recorded gradient. The error measure is relative with a
small absolute floor so near-zero partials do not dominate.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .rng import Prng
from .tensor import Tensor, no_grad


def central_diff_errors(
    loss_fn: Callable[[Sequence[Tensor]], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    max_coords: int = 24,
    rng: Prng | None = None,
) -> float:
    """Max relative error of recorded grads vs central differences.

    loss_fn maps the given tensors to a scalar Tensor; inputs must be f64
    leaves with requires_grad set.
    """
    rng = rng or Prng(0)
    for t in inputs:
        if t.dtype != np.float64:
            raise ValueError("gradient checks require float64 inputs")
        t.grad = None
    loss = loss_fn(inputs)
    loss.backward()
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else np.sort(rng.integers(max_coords, n))
        scale = max(float(np.max(np.abs(analytic))), 1e-3)
        for c in np.unique(coords):
            orig = flat[c]
            with no_grad():
                flat[c] = orig + h
                up = float(loss_fn(inputs).data)
                flat[c] = orig - h
                dn = float(loss_fn(inputs).data)
            flat[c] = orig
            fd = (up - dn) / (2.0 * h)
            a = float(analytic.reshape(-1)[c])
            err = abs(a - fd) / max(abs(a), abs(fd), scale)
            worst = max(worst, err)
    return worst


def check(loss_fn, inputs, tol: float = 1e-4, **kw) -> tuple[bool, float]:
    err = central_diff_errors(loss_fn, inputs, **kw)
    return err < tol, err
