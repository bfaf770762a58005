"""Hot-kernel dispatch: compiled extension when available, numpy fallback otherwise.

The backend is chosen once at import (compiled if the extension built) and can
be overridden programmatically with :func:`set_backend` for tests and
benchmarks. Both backends produce bit-identical results, so the choice only
affects speed.
"""

from __future__ import annotations

import numpy as np

from . import _kernels_py as _py
from ._kernels_py import conv_out_hw

try:
    from . import _ckernels as _c
except ImportError:  # pure-python install
    _c = None

_backend = "compiled" if _c is not None else "python"


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _c is not None else [])


def active_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Select 'compiled', 'python', or 'auto' (prefer compiled)."""
    global _backend
    if name == "auto":
        _backend = "compiled" if _c is not None else "python"
        return
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _c is None:
        raise RuntimeError("compiled kernels are not available in this install")
    _backend = name


def _check_float(x: np.ndarray) -> np.ndarray:
    if x.dtype.type not in (np.float32, np.float64):
        raise TypeError(f"kernels require f32/f64, got {x.dtype}")
    return np.ascontiguousarray(x)


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    x = _check_float(x)
    if _backend == "python":
        return _py.im2col(x, kh, kw, stride, pad)
    B, C, H, W = x.shape
    Ho, Wo = conv_out_hw(H, W, kh, kw, stride, pad)
    out = np.empty((B, C * kh * kw, Ho * Wo), dtype=x.dtype)
    _c.im2col(x, out, kh, kw, stride, pad)
    return out


def col2im(cols: np.ndarray, B: int, C: int, H: int, W: int, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    cols = _check_float(cols)
    if _backend == "python":
        return _py.col2im(cols, B, C, H, W, kh, kw, stride, pad)
    out = np.zeros((B, C, H, W), dtype=cols.dtype)
    _c.col2im(cols, out, kh, kw, stride, pad)
    return out


def masked_median(vals: np.ndarray, valid: np.ndarray, fill: float) -> np.ndarray:
    vals = _check_float(vals)
    valid = np.ascontiguousarray(valid)
    if vals.shape != valid.shape:
        raise ValueError("vals and valid must have matching shapes")
    if _backend == "python":
        return _py.masked_median(vals, valid.astype(bool), fill)
    out = np.empty(vals.shape[1], dtype=vals.dtype)
    scratch = np.empty(vals.shape[0], dtype=vals.dtype)
    _c.masked_median(vals, valid.astype(np.uint8), vals.dtype.type(fill), out, scratch)
    return out
