"""Minimal module system: parameter registration plus a few standard layers.

A Parameter is a Tensor with requires_grad set. Modules auto-register
Parameter/Module attributes (and lists of Modules) in definition order, which
makes parameter naming deterministic. Layers take an optional Prng; passing
None gives zero weights, which is what shape-only workflows (parameter
counting) use.
"""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from ..numcore import ops
from ..numcore.rng import Prng
from ..numcore.tensor import Tensor

INIT_STD = 0.02


class Parameter(Tensor):
    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            for i, v in enumerate(value):
                self._children[f"{name}.{i}"] = v
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield (f"{prefix}{name}", p)
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def __call__(self, *args, **kw):
        return self.forward(*args, **kw)

    def forward(self, *args, **kw):
        raise NotImplementedError


def _weight(rng: Optional[Prng], shape, dtype) -> Parameter:
    if rng is None:
        return Parameter(np.zeros(shape, dtype=dtype))
    return Parameter(rng.trunc_normal(shape, std=INIT_STD, dtype=dtype))


class Linear(Module):
    """y = x @ W + b with W of shape [in, out]."""

    def __init__(self, d_in: int, d_out: int, bias: bool = True, rng: Optional[Prng] = None, dtype=np.float32):
        super().__init__()
        self.weight = _weight(rng, (d_in, d_out), dtype)
        self.bias = Parameter(np.zeros(d_out, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        k: int,
        stride: int = 1,
        padding: int = 0,
        bias: bool = True,
        rng: Optional[Prng] = None,
        dtype=np.float32,
    ):
        super().__init__()
        self.weight = _weight(rng, (c_out, c_in, k, k), dtype)
        self.bias = Parameter(np.zeros(c_out, dtype=dtype)) if bias else None
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)
