"""Differentiable operations over Tensors.

Shape conventions: images are [B, C, H, W]; token grids for windowed
attention are [B, H, W, C]; attention operates on [N, L, D]. Every op
allocates a fresh output and registers a backward rule; none mutates its
inputs. Convolution uses the im2col/col2im kernels from
:mod:`agbpipe.kernels` (compiled or numpy, bit-identical).
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf as _erf

from .. import kernels
from ..errors import InvalidArgument
from .tensor import Tensor, _unbroadcast

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _same_dtype(*ts: Tensor) -> None:
    d0 = ts[0].dtype
    for t in ts[1:]:
        if t.dtype != d0:
            raise InvalidArgument(f"dtype mismatch: {d0} vs {t.dtype}")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._result(out, "exp", (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return Tensor._result(np.log(x.data), "log", (x,), lambda g: (g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return Tensor._result(out, "sqrt", (x,), lambda g: (g * 0.5 / out,))


def absolute(x: Tensor) -> Tensor:
    return Tensor._result(np.abs(x.data), "abs", (x,), lambda g: ((g * np.sign(x.data)).astype(x.dtype),))


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return Tensor._result(out, "relu", (x,), lambda g: (np.where(x.data > 0, g, 0).astype(x.dtype),))


def erf(x: Tensor) -> Tensor:
    out = _erf(x.data).astype(x.dtype)

    def bw(g):
        return ((g * _TWO_OVER_SQRT_PI * np.exp(-x.data * x.data)).astype(x.dtype),)

    return Tensor._result(out, "erf", (x,), bw)


def gelu(x: Tensor) -> Tensor:
    """Exact-erf GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    cdf = 0.5 * (1.0 + _erf(x.data * _INV_SQRT2))
    out = (x.data * cdf).astype(x.dtype)

    def bw(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
        return ((g * (cdf + x.data * pdf)).astype(x.dtype),)

    return Tensor._result(out, "gelu", (x,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax; -inf logits get exactly zero weight."""
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = (e / np.sum(e, axis=axis, keepdims=True)).astype(x.dtype)

    def bw(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return ((out * (g - dot)).astype(x.dtype),)

    return Tensor._result(out, "softmax", (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    _same_dtype(x, gamma, beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise InvalidArgument("layer_norm scale/offset must match the channel dim")
    mu = np.mean(x.data, axis=-1, keepdims=True, dtype=x.dtype)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True, dtype=x.dtype)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    out = (xhat * gamma.data + beta.data).astype(x.dtype)

    def bw(g):
        reduce_axes = tuple(range(g.ndim - 1))
        dbeta = g.sum(axis=reduce_axes)
        dgamma = (g * xhat).sum(axis=reduce_axes)
        dxhat = g * gamma.data
        m1 = np.mean(dxhat, axis=-1, keepdims=True, dtype=x.dtype)
        m2 = np.mean(dxhat * xhat, axis=-1, keepdims=True, dtype=x.dtype)
        dx = (inv * (dxhat - m1 - xhat * m2)).astype(x.dtype)
        return dx, dgamma.astype(x.dtype), dbeta.astype(x.dtype)

    return Tensor._result(out, "layer_norm", (x, gamma, beta), bw)


# ---------------------------------------------------------------------------
# linear algebra / structure
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b)
    _same_dtype(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise InvalidArgument("matmul expects operands with ndim >= 2")
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._result(out, "matmul", (a, b), bw)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [_t(t) for t in tensors]
    _same_dtype(*tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return Tensor._result(out, "concat", tuple(tensors), bw)


def roll(x: Tensor, shifts: Sequence[int], axes: Sequence[int]) -> Tensor:
    shifts, axes = tuple(shifts), tuple(axes)
    out = np.roll(x.data, shifts, axis=axes)
    neg = tuple(-s for s in shifts)
    return Tensor._result(out, "roll", (x,), lambda g: (np.roll(g, neg, axis=axes),))


def take_rows(table: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table by integer index array; scatter-add backward."""
    idx = np.asarray(idx)
    out = table.data[idx]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return Tensor._result(out, "take_rows", (table,), bw)


# ---------------------------------------------------------------------------
# convolution and rearrangements
# ---------------------------------------------------------------------------


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation (no kernel flip): [B,Cin,H,W] * [Cout,Cin,kh,kw]."""
    x, weight = _t(x), _t(weight)
    _same_dtype(x, weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise InvalidArgument("conv2d expects 4-D input and weight")
    B, Cin, H, W = x.shape
    Cout, Cw, kh, kw = weight.shape
    if Cin != Cw:
        raise InvalidArgument(f"conv2d channel mismatch: input {Cin} vs weight {Cw}")
    if stride < 1:
        raise InvalidArgument("stride must be >= 1")
    if H + 2 * padding < kh or W + 2 * padding < kw:
        raise InvalidArgument("kernel larger than padded input")
    if bias is not None and bias.shape != (Cout,):
        raise InvalidArgument("bias must have shape [Cout]")

    Ho, Wo = kernels.conv_out_hw(H, W, kh, kw, stride, padding)
    cols = kernels.im2col(x.data, kh, kw, stride, padding)  # [B, K, P]
    w2 = weight.data.reshape(Cout, Cin * kh * kw)
    out2 = w2 @ cols  # [B, Cout, P]
    out = out2.reshape(B, Cout, Ho, Wo)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(B, Cout, Ho * Wo)
        dw = np.einsum("bop,bkp->ok", g2, cols).reshape(weight.shape).astype(x.dtype)
        dcols = np.matmul(w2.T, g2)  # [B, K, P]
        dx = kernels.col2im(dcols, B, Cin, H, W, kh, kw, stride, padding)
        if bias is None:
            return dx, dw
        return dx, dw, g.sum(axis=(0, 2, 3)).astype(x.dtype)

    return Tensor._result(np.ascontiguousarray(out), "conv2d", parents, bw)


def _ps_fwd(d: np.ndarray, r: int) -> np.ndarray:
    B, C, H, W = d.shape
    co = C // (r * r)
    out = d.reshape(B, co, r, r, H, W).transpose(0, 1, 4, 2, 5, 3).reshape(B, co, H * r, W * r)
    return np.ascontiguousarray(out)


def _ps_inv(d: np.ndarray, r: int) -> np.ndarray:
    B, C, Hr, Wr = d.shape
    H, W = Hr // r, Wr // r
    out = d.reshape(B, C, H, r, W, r).transpose(0, 1, 3, 5, 2, 4).reshape(B, C * r * r, H, W)
    return np.ascontiguousarray(out)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Channel-to-space: [B, C*r*r, H, W] -> [B, C, r*H, r*W], a bijection on elements."""
    if r < 1:
        raise InvalidArgument("upscale factor must be >= 1")
    B, C, H, W = x.shape
    if C % (r * r) != 0:
        raise InvalidArgument(f"channels {C} not divisible by r^2 = {r * r}")
    out = _ps_fwd(x.data, r)
    return Tensor._result(out, "pixel_shuffle", (x,), lambda g: (_ps_inv(g, r),))


def _win_fwd(d: np.ndarray, w: int, shift: int) -> np.ndarray:
    B, H, W, C = d.shape
    if shift:
        d = np.roll(d, (-shift, -shift), axis=(1, 2))
    nh, nw = H // w, W // w
    out = d.reshape(B, nh, w, nw, w, C).transpose(0, 1, 3, 2, 4, 5).reshape(B * nh * nw, w * w, C)
    return np.ascontiguousarray(out)


def _win_inv(d: np.ndarray, w: int, shift: int, B: int, H: int, W: int) -> np.ndarray:
    nh, nw = H // w, W // w
    C = d.shape[-1]
    out = d.reshape(B, nh, nw, w, w, C).transpose(0, 1, 3, 2, 4, 5).reshape(B, H, W, C)
    if shift:
        out = np.roll(out, (shift, shift), axis=(1, 2))
    return np.ascontiguousarray(out)


def window_partition(x: Tensor, w: int, shift: int = 0) -> Tensor:
    """Cyclically roll by -shift then cut [B,H,W,C] into [B*(H/w)*(W/w), w*w, C]."""
    B, H, W, C = x.shape
    if H % w or W % w:
        raise InvalidArgument(f"grid {H}x{W} not divisible by window {w}")
    if not (0 <= shift < w):
        raise InvalidArgument("shift must satisfy 0 <= shift < window")
    out = _win_fwd(x.data, w, shift)
    return Tensor._result(out, "window_partition", (x,), lambda g: (_win_inv(g, w, shift, B, H, W),))


def window_reverse(windows: Tensor, w: int, shift: int, grid: tuple[int, int]) -> Tensor:
    """Inverse of window_partition for a given output grid (H, W)."""
    H, W = grid
    n_per_img = (H // w) * (W // w)
    N = windows.shape[0]
    if N % n_per_img:
        raise InvalidArgument("window count does not tile the requested grid")
    B = N // n_per_img
    out = _win_inv(windows.data, w, shift, B, H, W)
    return Tensor._result(out, "window_reverse", (windows,), lambda g: (_win_fwd(g, w, shift),))


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    heads: int,
    rel_bias: Optional[Tensor] = None,
    attn_mask: Optional[np.ndarray] = None,
) -> Tensor:
    """Scaled dot-product attention over [N, L, D] with optional additive bias/mask.

    rel_bias: Tensor [heads, L, L], broadcast over N.
    attn_mask: array [L, L], or [G, L, L] with N divisible by G (per-group
    masks, e.g. per window position); -inf entries receive zero weight.
    """
    _same_dtype(q, k, v)
    N, L, D = q.shape
    if D % heads:
        raise InvalidArgument(f"model dim {D} not divisible by heads {heads}")
    if q.shape != k.shape or q.shape != v.shape:
        raise InvalidArgument("q, k, v must share [N, L, D]")
    dh = D // heads

    def heads_split(t: Tensor) -> Tensor:
        return t.reshape(N, L, heads, dh).transpose((0, 2, 1, 3))

    qh, kh, vh = heads_split(q), heads_split(k), heads_split(v)
    scores = matmul(qh, kh.transpose((0, 1, 3, 2))) * float(dh**-0.5)
    if rel_bias is not None:
        if rel_bias.shape != (heads, L, L):
            raise InvalidArgument("rel_bias must have shape [heads, L, L]")
        scores = scores + rel_bias
    if attn_mask is not None:
        m = np.asarray(attn_mask, dtype=q.dtype)
        if m.ndim == 2:
            scores = scores + Tensor(m)
        elif m.ndim == 3:
            G = m.shape[0]
            if N % G:
                raise InvalidArgument("mask group count must divide N")
            scores = scores.reshape(N // G, G, heads, L, L) + Tensor(m[:, None, :, :])
            scores = scores.reshape(N, heads, L, L)
        else:
            raise InvalidArgument("attn_mask must be [L,L] or [G,L,L]")
    attn = softmax(scores, axis=-1)
    out = matmul(attn, vh)
    return out.transpose((0, 2, 1, 3)).reshape(N, L, D)


# ---------------------------------------------------------------------------
# pooling and resampling
# ---------------------------------------------------------------------------


def max_pool2d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping k x k max pooling; ties route the gradient to the first max."""
    B, C, H, W = x.shape
    if H % k or W % k:
        raise InvalidArgument(f"spatial dims {H}x{W} not divisible by pool size {k}")
    hk, wk = H // k, W // k
    r = x.data.reshape(B, C, hk, k, wk, k).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, hk, wk, k * k)
    idx = r.argmax(axis=-1)
    out = np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gr = np.zeros_like(r)
        np.put_along_axis(gr, idx[..., None], g[..., None], axis=-1)
        gx = gr.reshape(B, C, hk, wk, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)
        return (np.ascontiguousarray(gx),)

    return Tensor._result(np.ascontiguousarray(out), "max_pool2d", (x,), bw)


def _pool_bounds(n_in: int, n_out: int) -> list[tuple[int, int]]:
    return [((i * n_in) // n_out, -((-(i + 1) * n_in) // n_out)) for i in range(n_out)]


def adaptive_avg_pool2d(x: Tensor, out_hw: tuple[int, int]) -> Tensor:
    """Average pooling to an arbitrary output grid (torch-style region bounds;
    targets larger than the input read overlapping single-pixel regions)."""
    B, C, H, W = x.shape
    oh, ow = out_hw
    if oh < 1 or ow < 1:
        raise InvalidArgument(f"adaptive pool target {oh}x{ow} must be positive")
    hb, wb = _pool_bounds(H, oh), _pool_bounds(W, ow)
    out = np.empty((B, C, oh, ow), dtype=x.dtype)
    for i, (h0, h1) in enumerate(hb):
        for j, (w0, w1) in enumerate(wb):
            out[:, :, i, j] = x.data[:, :, h0:h1, w0:w1].mean(axis=(2, 3), dtype=x.dtype)

    def bw(g):
        gx = np.zeros_like(x.data)
        for i, (h0, h1) in enumerate(hb):
            for j, (w0, w1) in enumerate(wb):
                cnt = (h1 - h0) * (w1 - w0)
                gx[:, :, h0:h1, w0:w1] += (g[:, :, i, j] / cnt)[:, :, None, None]
        return (gx,)

    return Tensor._result(out, "adaptive_avg_pool2d", (x,), bw)


def _resize_axis(n_in: int, n_out: int, dtype):
    c = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    c = np.clip(c, 0.0, n_in - 1.0)
    lo = np.floor(c).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = (c - lo).astype(dtype)
    return lo, hi, frac


def bilinear_resize(x: Tensor, out_hw: tuple[int, int]) -> Tensor:
    """Bilinear resampling with half-pixel centers (align_corners=False)."""
    B, C, H, W = x.shape
    oh, ow = out_hw
    if oh < 1 or ow < 1:
        raise InvalidArgument("resize target must be positive")
    y0, y1, fy = _resize_axis(H, oh, x.dtype)
    x0, x1, fx = _resize_axis(W, ow, x.dtype)
    wx = fx[None, :]

    top = x.data[:, :, y0, :]
    bot = x.data[:, :, y1, :]
    rows = top * (1 - fy)[None, None, :, None] + bot * fy[None, None, :, None]  # [B,C,oh,W]
    out = rows[:, :, :, x0] * (1 - wx) + rows[:, :, :, x1] * wx

    def bw(g):
        grows = np.zeros((B, C, oh, W), dtype=x.dtype)
        np.add.at(grows, (slice(None), slice(None), slice(None), x0), g * (1 - wx))
        np.add.at(grows, (slice(None), slice(None), slice(None), x1), g * wx)
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None), slice(None), y0), grows * (1 - fy)[None, None, :, None])
        np.add.at(gx, (slice(None), slice(None), y1), grows * fy[None, None, :, None])
        return (gx,)

    return Tensor._result(out.astype(x.dtype), "bilinear_resize", (x,), bw)
