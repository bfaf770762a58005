"""Finite-difference self-checks for the differentiable ops and tiny models.

Backs the `grad-check` subcommand and the acceptance suite. Everything runs
in float64 with perturbation h=1e-5 and a 1e-4 relative tolerance; model
checks use reduced widths so a full pass stays fast on one CPU core.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .models.heads import RegressionHead, RegressionHeadConfig
from .models.simmim import SimMIMConfig, SimMIMPretrainer, sample_patch_mask
from .models.swin import SwinBlock, SwinConfig, SwinEncoder
from .models.unet import UNet, UNetConfig
from .numcore import ops
from .numcore.gradcheck import central_diff_errors
from .numcore.rng import Prng
from .numcore.tensor import Tensor
from .training.losses import masked_rmse_loss

TOL = 1e-4


def _leaf(rng: Prng, shape, scale=1.0, positive=False, away_from_zero=0.0) -> Tensor:
    x = rng.normal(shape, 0.0, scale, dtype=np.float64)
    if positive:
        x = np.abs(x) + 0.5
    if away_from_zero:
        x = x + away_from_zero * np.sign(x)
    return Tensor(x, requires_grad=True)


def _wsum(t: Tensor, rng: Prng) -> Tensor:
    """Scalarize with a fixed random weighting so gradients are well-scaled."""
    w = Tensor(np.where(rng.uniform(t.shape, dtype=np.float64) < 0.5, -1.0, 1.0))
    return (t * w).sum()


# --- op cases ---------------------------------------------------------------


def _case_arith(seed):
    rng = Prng(seed)
    a, b = _leaf(rng.child(1), (3, 4)), _leaf(rng.child(2), (3, 4), away_from_zero=0.3)
    w = rng.child(3)
    return central_diff_errors(lambda ts: _wsum(ts[0] * ts[1] + ts[0] / ts[1] - ts[1], w.child(9)), [a, b])


def _case_reductions(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (2, 3, 4))
    return central_diff_errors(
        lambda ts: (ts[0].sum(axis=2).mean(axis=0) * Tensor(np.arange(3.0) + 1.0)).sum(), [x]
    )


def _case_structure(seed):
    rng = Prng(seed)
    a, b = _leaf(rng.child(1), (2, 3, 4)), _leaf(rng.child(2), (2, 3, 4))
    w = rng.child(3)

    def f(ts):
        c = ops.concat([ts[0], ts[1]], axis=1)
        c = ops.roll(c, (1, 2), (1, 2))
        c = c.transpose((0, 2, 1))[:, 1:3, :]
        return _wsum(c.reshape(-1, 2), w.child(9))

    return central_diff_errors(f, [a, b])


def _case_matmul(seed):
    rng = Prng(seed)
    a, b = _leaf(rng.child(1), (2, 3, 4)), _leaf(rng.child(2), (4, 5))
    w = rng.child(3)
    return central_diff_errors(lambda ts: _wsum(ops.matmul(ts[0], ts[1]), w.child(9)), [a, b])


def _case_exp_log_sqrt(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (3, 3), positive=True)
    w = rng.child(2)
    return central_diff_errors(lambda ts: _wsum(ops.exp(ops.log(ts[0])) + ops.sqrt(ts[0]), w.child(9)), [x])


def _case_relu(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (4, 4), away_from_zero=0.3)
    w = rng.child(2)
    return central_diff_errors(lambda ts: _wsum(ops.relu(ts[0]), w.child(9)), [x])


def _case_gelu(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (4, 4))
    w = rng.child(2)
    return central_diff_errors(lambda ts: _wsum(ops.gelu(ts[0]) + ops.erf(ts[0]), w.child(9)), [x])


def _case_softmax(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (3, 5))
    w = rng.child(2)
    return central_diff_errors(lambda ts: _wsum(ops.softmax(ts[0], axis=-1), w.child(9)), [x])


def _case_layer_norm(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (2, 3, 6))
    g = Tensor(rng.child(2).normal(6, 1.0, 0.2, dtype=np.float64), requires_grad=True)
    b = Tensor(rng.child(3).normal(6, 0.0, 0.2, dtype=np.float64), requires_grad=True)
    w = rng.child(4)
    return central_diff_errors(lambda ts: _wsum(ops.layer_norm(ts[0], ts[1], ts[2]), w.child(9)), [x, g, b])


def _case_conv2d(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (2, 3, 8, 8))
    wt = _leaf(rng.child(2), (4, 3, 3, 3), scale=0.5)
    bias = _leaf(rng.child(3), (4,), scale=0.5)
    w = rng.child(4)
    return central_diff_errors(
        lambda ts: _wsum(ops.conv2d(ts[0], ts[1], ts[2], stride=2, padding=1), w.child(9)), [x, wt, bias]
    )


def _case_pixel_shuffle(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (2, 8, 3, 5))
    w = rng.child(2)
    return central_diff_errors(lambda ts: _wsum(ops.pixel_shuffle(ts[0], 2), w.child(9)), [x])


def _case_window_partition(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (1, 4, 4, 3))
    w = rng.child(2)

    def f(ts):
        wins = ops.window_partition(ts[0], 2, shift=1)
        back = ops.window_reverse(wins, 2, 1, (4, 4))
        return _wsum(wins, w.child(8)) + _wsum(back, w.child(9))

    return central_diff_errors(f, [x])


def _case_attention(seed):
    rng = Prng(seed)
    q = _leaf(rng.child(1), (2, 4, 8))
    k = _leaf(rng.child(2), (2, 4, 8))
    v = _leaf(rng.child(3), (2, 4, 8))
    bias = Tensor(rng.child(4).normal((2, 4, 4), 0.0, 0.3, dtype=np.float64), requires_grad=True)
    mask = np.zeros((4, 4))
    mask[0, 3] = -np.inf
    w = rng.child(5)
    return central_diff_errors(
        lambda ts: _wsum(ops.multi_head_attention(ts[0], ts[1], ts[2], 2, rel_bias=ts[3], attn_mask=mask), w.child(9)),
        [q, k, v, bias],
    )


def _case_max_pool(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (2, 3, 6, 6), scale=3.0)
    w = rng.child(2)
    return central_diff_errors(lambda ts: _wsum(ops.max_pool2d(ts[0], 2), w.child(9)), [x])


def _case_avg_pool(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (2, 3, 7, 5))
    w = rng.child(2)
    return central_diff_errors(lambda ts: _wsum(ops.adaptive_avg_pool2d(ts[0], (3, 2)), w.child(9)), [x])


def _case_bilinear(seed):
    rng = Prng(seed)
    x = _leaf(rng.child(1), (2, 3, 5, 4))
    w = rng.child(2)
    return central_diff_errors(lambda ts: _wsum(ops.bilinear_resize(ts[0], (9, 7)), w.child(9)), [x])


def _case_take_rows(seed):
    rng = Prng(seed)
    table = _leaf(rng.child(1), (6, 3))
    idx = rng.child(2).integers(10, 6).reshape(5, 2)
    w = rng.child(3)
    return central_diff_errors(lambda ts: _wsum(ops.take_rows(ts[0], idx), w.child(9)), [table])


def _case_masked_rmse(seed):
    rng = Prng(seed)
    pred = _leaf(rng.child(1), (2, 4, 4), scale=2.0)
    label = rng.child(2).normal((2, 4, 4), 0.0, 2.0, dtype=np.float64)
    valid = rng.child(3).uniform((2, 4, 4), dtype=np.float64) < 0.6
    valid[0, 0, 0] = True
    return central_diff_errors(lambda ts: masked_rmse_loss(ts[0], label, valid), [pred])


OP_CASES: dict[str, Callable[[int], float]] = {
    "arithmetic": _case_arith,
    "reductions": _case_reductions,
    "structure": _case_structure,
    "matmul": _case_matmul,
    "exp_log_sqrt": _case_exp_log_sqrt,
    "relu": _case_relu,
    "gelu": _case_gelu,
    "softmax": _case_softmax,
    "layer_norm": _case_layer_norm,
    "conv2d": _case_conv2d,
    "pixel_shuffle": _case_pixel_shuffle,
    "window_partition": _case_window_partition,
    "attention": _case_attention,
    "max_pool2d": _case_max_pool,
    "avg_pool2d": _case_avg_pool,
    "bilinear_resize": _case_bilinear,
    "take_rows": _case_take_rows,
    "masked_rmse_loss": _case_masked_rmse,
}


# --- model cases ------------------------------------------------------------

_MICRO_SWIN = SwinConfig(in_channels=6, embed_dim=8, depths=(1, 1, 1, 1), heads=(1, 2, 4, 8), window=2)


def _fd_condition(model, rng: Prng) -> None:
    """Move the model away from kinks for the FD check.

    The training init (std 0.02, zero biases) leaves many ReLU pre-activations
    exactly at or within the finite-difference step of the kink, which
    corrupts difference quotients without indicating a gradient bug. Weights
    are rescaled to unit-magnitude activations and one-dim parameters
    (biases, norm affines) get a small jitter to break exact zeros."""
    for name, p in model.named_parameters():
        if p.ndim >= 2:
            fan_in = int(np.prod(p.shape[1:])) if p.ndim == 4 else int(p.shape[0])
            p.data = p.data * (1.2 / (0.02 * np.sqrt(fan_in)))
        else:
            p.data = p.data + rng.normal(p.shape, 0.0, 0.05, dtype=np.float64)


_MODEL_H = 1e-6  # narrower step for compositions with ReLU/max/abs kinks


def _pick_params(model, rng: Prng, count: int) -> list[Tensor]:
    named = list(model.named_parameters())
    if len(named) <= count:
        return [p for _, p in named]
    sel = rng.permutation(len(named))[:count]
    return [named[int(i)][1] for i in sorted(sel)]


def _case_model_swin_block(seed):
    rng = Prng(seed)
    block = SwinBlock(8, heads=2, window=2, shifted=True, mlp_ratio=2.0, rng=rng.child(1), dtype=np.float64)
    x = _leaf(rng.child(2), (1, 4, 4, 8), scale=0.8)
    w = rng.child(3)
    inputs = [x] + _pick_params(block, rng.child(4), 6)
    return central_diff_errors(lambda ts: _wsum(block(ts[0]), w.child(9)), inputs, max_coords=6, h=_MODEL_H)


def _case_model_simmim(seed):
    rng = Prng(seed)
    enc = SwinEncoder(_MICRO_SWIN, rng=rng.child(1), dtype=np.float64)
    model = SimMIMPretrainer(enc, SimMIMConfig(mask_patch_size=8), rng=rng.child(2), dtype=np.float64)
    x = _leaf(rng.child(3), (1, 6, 32, 32), scale=0.8)
    _fd_condition(model, rng.child(8))
    masks = sample_patch_mask(rng.child(4), (4, 4), 0.6)[None]
    inputs = [x] + _pick_params(model, rng.child(5), 5)
    return central_diff_errors(lambda ts: model(ts[0], masks)[1], inputs, max_coords=5, h=_MODEL_H)


def _case_model_head(seed):
    rng = Prng(seed)
    dims = _MICRO_SWIN.stage_dims()
    head = RegressionHead(dims, RegressionHeadConfig(fusion_dim=8, up_dims=(4, 4)), rng=rng.child(1), dtype=np.float64)
    _fd_condition(head, rng.child(8))
    feats = [
        _leaf(rng.child(10 + i), (1, d, 8 // 2**i, 8 // 2**i), scale=0.8) for i, d in enumerate(dims)
    ]
    w = rng.child(2)
    inputs = [feats[0]] + _pick_params(head, rng.child(3), 5)
    return central_diff_errors(lambda ts: _wsum(head(feats), w.child(9)), inputs, max_coords=5, h=_MODEL_H)


def _case_model_unet(seed):
    rng = Prng(seed)
    model = UNet(UNetConfig(base=4, depth=2), rng=rng.child(1), dtype=np.float64)
    _fd_condition(model, rng.child(8))
    x = _leaf(rng.child(2), (1, 6, 8, 8), scale=0.8)
    w = rng.child(3)
    inputs = [x] + _pick_params(model, rng.child(4), 6)
    return central_diff_errors(lambda ts: _wsum(model(ts[0]), w.child(9)), inputs, max_coords=6, h=_MODEL_H)


MODEL_CASES: dict[str, Callable[[int], float]] = {
    "swin_block": _case_model_swin_block,
    "simmim_path": _case_model_simmim,
    "regression_head": _case_model_head,
    "unet": _case_model_unet,
}


def run_cases(cases: dict[str, Callable], seeds=range(10), tol: float = TOL) -> list[tuple[str, float, bool]]:
    """(name, worst error, passed) per case over the given seeds."""
    results = []
    for name, fn in cases.items():
        worst = max(fn(s) for s in seeds)
        results.append((name, worst, worst < tol))
    return results
