"""Dense tensors with reverse-mode differentiation over a recorded graph.

Tensors wrap contiguous numpy arrays (float32 for training, float64 for
gradient checking). Every differentiable op creates a fresh output tensor
and, while gradients are enabled, attaches a ``Node`` closing over whatever
the backward rule needs. ``Tensor.backward`` traces the nodes reachable from
a scalar loss into a topologically ordered ``Graph`` and visits each node
exactly once, accumulating gradients on the leaves. No op mutates its
inputs; optimizer steps replace parameter buffers wholesale.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import InvalidArgument

FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True


class no_grad:
    """Context manager disabling graph recording (validation / inference)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def is_grad_enabled() -> bool:
    return _grad_enabled


class Node:
    """One recorded op: parent tensors and a rule mapping dL/dout to parent grads."""

    __slots__ = ("op", "parents", "backward")

    def __init__(self, op: str, parents: tuple, backward: Callable[[np.ndarray], tuple]):
        self.op = op
        self.parents = parents
        self.backward = backward


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None

    # -- basic properties ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _fail("item() needs a scalar")

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- graph construction helpers -------------------------------------------

    @staticmethod
    def _result(data: np.ndarray, op: str, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.node = Node(op, tuple(parents), backward)
        else:
            out.requires_grad = False
            out.node = None
        return out

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            if other.dtype != self.dtype:
                raise InvalidArgument(f"dtype mismatch: {self.dtype} vs {other.dtype}")
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        o = self._coerce(other)
        a, b = self, o
        out = a.data + b.data
        return Tensor._result(out, "add", (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        a, b = self, o
        out = a.data - b.data
        return Tensor._result(out, "sub", (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        o = self._coerce(other)
        a, b = self, o
        out = a.data * b.data
        return Tensor._result(
            out,
            "mul",
            (a, b),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        a, b = self, o
        out = a.data / b.data
        return Tensor._result(
            out,
            "div",
            (a, b),
            lambda g: (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
        )

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __neg__(self):
        return Tensor._result(-self.data, "neg", (self,), lambda g: (-g,))

    def __pow__(self, expo):
        if not isinstance(expo, (int, float)):
            raise InvalidArgument("only scalar exponents are supported")
        e = float(expo)
        x = self
        out = x.data**e
        return Tensor._result(out, "pow", (x,), lambda g: (g * e * x.data ** (e - 1.0),))

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    # -- structure -------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        x = self
        out = np.reshape(x.data, shape)
        return Tensor._result(out, "reshape", (x,), lambda g: (np.reshape(g, x.shape),))

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
        out = np.transpose(self.data, axes)
        return Tensor._result(out, "transpose", (self,), lambda g: (np.transpose(g, inv),))

    def __getitem__(self, key) -> "Tensor":
        x = self
        out = x.data[key]
        if isinstance(out, np.ndarray) and out.base is not None:
            out = out.copy()

        def bw(g):
            gx = np.zeros(x.shape, dtype=x.dtype)
            gx[key] = g
            return (gx,)

        return Tensor._result(np.asarray(out), "slice", (x,), bw)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        x = self
        out = np.sum(x.data, axis=axis, keepdims=keepdims)

        def bw(g):
            if axis is None:
                return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, x.shape).astype(x.dtype, copy=True),)

        return Tensor._result(np.asarray(out, dtype=x.dtype), "sum", (x,), bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        x = self
        n = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
        out = np.mean(x.data, axis=axis, keepdims=keepdims, dtype=x.dtype)

        def bw(g):
            if axis is None:
                return (np.broadcast_to(g / n, x.shape).astype(x.dtype, copy=True),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2 / n, x.shape).astype(x.dtype, copy=True),)

        return Tensor._result(np.asarray(out, dtype=x.dtype), "mean", (x,), bw)

    # -- backward ---------------------------------------------------------------

    def backward(self) -> None:
        """Populate .grad on every requires_grad ancestor of this scalar."""
        if self.data.size != 1:
            raise InvalidArgument(f"backward() needs a scalar, got shape {self.shape}")
        Graph.trace(self).run(self)


class Graph:
    """Topologically ordered record of the nodes reachable from a root tensor."""

    def __init__(self, order: list[Tensor]):
        self.order = order  # parents always precede consumers

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t.node is not None:
                for p in t.node.parents:
                    if id(p) not in seen:
                        stack.append((p, False))
        return cls(order)

    def run(self, root: Tensor) -> None:
        root.grad = np.ones_like(root.data)
        for t in reversed(self.order):
            if t.node is None or t.grad is None:
                continue
            grads = t.node.backward(t.grad)
            for p, g in zip(t.node.parents, grads):
                if g is None or not (p.requires_grad or p.node is not None):
                    continue
                if g.dtype != p.dtype:
                    g = g.astype(p.dtype)
                p.grad = g if p.grad is None else p.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to `shape` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _fail(msg: str):
    raise InvalidArgument(msg)
