"""Hierarchical windowed-attention encoder (Swin-style, four stages).

Feature maps come out at strides 4/8/16/32 with channel widths doubling per
stage. Attention runs inside non-overlapping windows; alternate blocks shift
the grid by half a window (cyclic roll) and mask attention across the rolled
boundary. When a stage grid is no larger than the window, the window clamps
to the grid and the shift is disabled, as in the reference formulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidArgument
from ..numcore import ops
from ..numcore.rng import Prng
from ..numcore.tensor import Tensor
from .module import Conv2d, LayerNorm, Linear, Module, Parameter


@dataclass(frozen=True)
class SwinConfig:
    in_channels: int = 6
    patch_size: int = 4
    embed_dim: int = 32
    depths: tuple[int, ...] = (2, 2, 2, 2)
    heads: tuple[int, ...] = (2, 4, 8, 16)
    window: int = 4
    mlp_ratio: float = 4.0
    shift_windows: bool = True

    def stage_dims(self) -> tuple[int, ...]:
        return tuple(self.embed_dim * 2**i for i in range(len(self.depths)))

    def total_stride(self) -> int:
        return self.patch_size * 2 ** (len(self.depths) - 1)

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "patch_size": self.patch_size,
            "embed_dim": self.embed_dim,
            "depths": list(self.depths),
            "heads": list(self.heads),
            "window": self.window,
            "mlp_ratio": self.mlp_ratio,
            "shift_windows": self.shift_windows,
        }


_PRESETS = {
    # Swin-B constants for the full-scale configuration.
    "paper": SwinConfig(embed_dim=128, depths=(2, 2, 18, 2), heads=(4, 8, 16, 32), window=7),
    "toy": SwinConfig(embed_dim=32, depths=(2, 2, 2, 2), heads=(2, 4, 8, 16), window=4),
}


def swin_preset(name: str, **overrides) -> SwinConfig:
    if name not in _PRESETS:
        raise InvalidArgument(f"unknown encoder preset {name!r} (have {sorted(_PRESETS)})")
    d = _PRESETS[name].to_dict()
    d.update(overrides)
    d["depths"] = tuple(d["depths"])
    d["heads"] = tuple(d["heads"])
    return SwinConfig(**d)


def _relative_index(w_eff: int, w_table: int) -> np.ndarray:
    """Flat index into a (2*w_table-1)^2 bias table for every token pair of a
    w_eff x w_eff window (w_eff <= w_table)."""
    coords = np.stack(np.meshgrid(np.arange(w_eff), np.arange(w_eff), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :]  # [2, L, L] in [-(w_eff-1), w_eff-1]
    return (rel[0] + w_table - 1) * (2 * w_table - 1) + (rel[1] + w_table - 1)


def _shift_mask(H: int, W: int, w: int, shift: int) -> np.ndarray:
    """Additive [-inf/0] mask of shape [nW, L, L] for shifted-window attention."""
    img = np.zeros((H, W), dtype=np.int64)
    region = 0
    spans = (slice(0, H - w), slice(H - w, H - shift), slice(H - shift, H))
    spans_w = (slice(0, W - w), slice(W - w, W - shift), slice(W - shift, W))
    for hs in spans:
        for ws in spans_w:
            img[hs, ws] = region
            region += 1
    nh, nw = H // w, W // w
    mw = img.reshape(nh, w, nw, w).transpose(0, 2, 1, 3).reshape(nh * nw, w * w)
    diff = mw[:, None, :] != mw[:, :, None]
    return np.where(diff, -np.inf, 0.0).astype(np.float32)


class WindowAttention(Module):
    """Multi-head self-attention within windows with a learned relative bias.

    The bias table covers relative offsets for the configured window size and
    is zero-initialized; smaller effective windows index a centered subset.
    """

    def __init__(self, dim: int, heads: int, window: int, rng: Optional[Prng], dtype=np.float32):
        super().__init__()
        if dim % heads:
            raise InvalidArgument(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.window = window
        self.qkv = Linear(dim, 3 * dim, rng=None if rng is None else rng.split(), dtype=dtype)
        self.proj = Linear(dim, dim, rng=None if rng is None else rng.split(), dtype=dtype)
        self.bias_table = Parameter(np.zeros(((2 * window - 1) ** 2, heads), dtype=dtype))
        self._idx_cache: dict[int, np.ndarray] = {}

    def forward(self, windows: Tensor, w_eff: int, attn_mask: Optional[np.ndarray]) -> Tensor:
        N, L, C = windows.shape
        qkv = self.qkv(windows)
        q, k, v = qkv[:, :, 0:C], qkv[:, :, C : 2 * C], qkv[:, :, 2 * C : 3 * C]
        idx = self._idx_cache.get(w_eff)
        if idx is None:
            idx = _relative_index(w_eff, self.window).reshape(-1)
            self._idx_cache[w_eff] = idx
        bias = ops.take_rows(self.bias_table, idx).reshape(L, L, self.heads).transpose((2, 0, 1))
        out = ops.multi_head_attention(q, k, v, self.heads, rel_bias=bias, attn_mask=attn_mask)
        return self.proj(out)


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng, dtype):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng=None if rng is None else rng.split(), dtype=dtype)
        self.fc2 = Linear(hidden, dim, rng=None if rng is None else rng.split(), dtype=dtype)

    def forward(self, x):
        return self.fc2(ops.gelu(self.fc1(x)))


class SwinBlock(Module):
    def __init__(self, dim: int, heads: int, window: int, shifted: bool, mlp_ratio: float, rng, dtype):
        super().__init__()
        self.norm1 = LayerNorm(dim, dtype=dtype)
        self.attn = WindowAttention(dim, heads, window, rng, dtype)
        self.norm2 = LayerNorm(dim, dtype=dtype)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng, dtype)
        self.window = window
        self.shifted = shifted
        self._mask_cache: dict[tuple[int, int], np.ndarray] = {}

    def forward(self, x: Tensor) -> Tensor:
        B, H, W, C = x.shape
        w = min(self.window, H, W)
        if H % w or W % w:
            raise InvalidArgument(f"stage grid {H}x{W} not divisible by window {w}")
        shift = w // 2 if (self.shifted and w < min(H, W)) else 0

        mask = None
        if shift:
            key = (H, W)
            mask = self._mask_cache.get(key)
            if mask is None:
                mask = _shift_mask(H, W, w, shift)
                self._mask_cache[key] = mask
            if x.dtype == np.float64:
                mask = mask.astype(np.float64)

        shortcut = x
        h = self.norm1(x)
        wins = ops.window_partition(h, w, shift)
        wins = self.attn(wins, w, mask)
        h = ops.window_reverse(wins, w, shift, (H, W))
        x = shortcut + h
        return x + self.mlp(self.norm2(x))


class PatchMerging(Module):
    """2x2 neighborhood concat followed by norm and linear reduction to 2*dim."""

    def __init__(self, dim: int, rng, dtype):
        super().__init__()
        self.norm = LayerNorm(4 * dim, dtype=dtype)
        self.reduce = Linear(4 * dim, 2 * dim, bias=False, rng=None if rng is None else rng.split(), dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        B, H, W, C = x.shape
        if H % 2 or W % 2:
            raise InvalidArgument(f"cannot merge odd grid {H}x{W}")
        parts = [
            x[:, 0::2, 0::2, :],
            x[:, 1::2, 0::2, :],
            x[:, 0::2, 1::2, :],
            x[:, 1::2, 1::2, :],
        ]
        merged = ops.concat(parts, axis=-1)
        return self.reduce(self.norm(merged))


class SwinEncoder(Module):
    """Four-stage encoder returning features at strides 4, 8, 16, 32."""

    def __init__(self, cfg: SwinConfig, rng: Optional[Prng] = None, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = Conv2d(
            cfg.in_channels, cfg.embed_dim, cfg.patch_size, stride=cfg.patch_size,
            rng=None if rng is None else rng.split(), dtype=dtype,
        )
        self.embed_norm = LayerNorm(cfg.embed_dim, dtype=dtype)
        dims = cfg.stage_dims()
        blocks = []
        merges = []
        norms = []
        for i, depth in enumerate(cfg.depths):
            stage = [
                SwinBlock(
                    dims[i], cfg.heads[i], cfg.window,
                    shifted=cfg.shift_windows and (b % 2 == 1),
                    mlp_ratio=cfg.mlp_ratio, rng=rng, dtype=dtype,
                )
                for b in range(depth)
            ]
            blocks.append(stage)
            norms.append(LayerNorm(dims[i], dtype=dtype))
            if i < len(cfg.depths) - 1:
                merges.append(PatchMerging(dims[i], rng, dtype))
        self.stages = [b for stage in blocks for b in stage]  # flat registration
        self._stage_blocks = blocks
        self.merges = merges
        self.feature_norms = norms

    def embed(self, image: Tensor) -> Tensor:
        """Patch-embed an image into the stride-4 token grid [B, H/4, W/4, E]."""
        B, C, H, W = image.shape
        stride = self.cfg.total_stride()
        if H % stride or W % stride:
            raise InvalidArgument(f"input {H}x{W} must be divisible by {stride}")
        if C != self.cfg.in_channels:
            raise InvalidArgument(f"expected {self.cfg.in_channels} input channels, got {C}")
        x = self.patch_embed(image)  # [B, E, H/4, W/4]
        return self.embed_norm(x.transpose((0, 2, 3, 1)))

    def run_stages(self, tokens: Tensor) -> list[Tensor]:
        x = tokens
        feats = []
        for i, stage in enumerate(self._stage_blocks):
            for block in stage:
                x = block(x)
            feats.append(self.feature_norms[i](x).transpose((0, 3, 1, 2)))
            if i < len(self._stage_blocks) - 1:
                x = self.merges[i](x)
        return feats

    def forward(self, image: Tensor) -> list[Tensor]:
        return self.run_stages(self.embed(image))
