"""Regression decoder: pyramid pooling + top-down fusion + learned 4x upscale.

The fused stride-4 map goes through two conv + pixel-shuffle blocks (each a
2x upscale) and a final single-channel convolution with a ReLU, so outputs
are non-negative and match the input resolution. The fusion width is narrow
by design: with the full-scale encoder the whole head stays around 0.6M
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidArgument
from ..numcore import ops
from ..numcore.rng import Prng
from ..numcore.tensor import Tensor
from .module import Conv2d, Module
from .swin import SwinConfig, SwinEncoder


@dataclass(frozen=True)
class RegressionHeadConfig:
    pool_scales: tuple[int, ...] = (1, 2, 3, 6)
    fusion_dim: int = 16
    up_dims: tuple[int, int] = (8, 8)

    def to_dict(self) -> dict:
        return {"pool_scales": list(self.pool_scales), "fusion_dim": self.fusion_dim, "up_dims": list(self.up_dims)}


def head_preset(name: str, **overrides) -> RegressionHeadConfig:
    base = {
        "paper": RegressionHeadConfig(fusion_dim=32, up_dims=(16, 8)),
        "toy": RegressionHeadConfig(fusion_dim=16, up_dims=(8, 8)),
    }
    if name not in base:
        raise InvalidArgument(f"unknown head preset {name!r}")
    d = base[name].to_dict()
    d.update(overrides)
    d["pool_scales"] = tuple(d["pool_scales"])
    d["up_dims"] = tuple(d["up_dims"])
    return RegressionHeadConfig(**d)


class RegressionHead(Module):
    def __init__(self, in_dims: tuple[int, int, int, int], cfg: RegressionHeadConfig,
                 rng: Optional[Prng] = None, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        cf = cfg.fusion_dim
        self.pool_convs = [Conv2d(in_dims[-1], cf, 1, rng=None if rng is None else rng.split(), dtype=dtype)
                           for _ in cfg.pool_scales]
        self.pool_bottleneck = Conv2d(in_dims[-1] + cf * len(cfg.pool_scales), cf, 3, padding=1,
                                      rng=None if rng is None else rng.split(), dtype=dtype)
        self.laterals = [Conv2d(d, cf, 1, rng=None if rng is None else rng.split(), dtype=dtype)
                         for d in in_dims[:-1]]
        self.fpn_convs = [Conv2d(cf, cf, 3, padding=1, rng=None if rng is None else rng.split(), dtype=dtype)
                          for _ in in_dims[:-1]]
        self.fusion = Conv2d(cf * len(in_dims), cf, 3, padding=1,
                             rng=None if rng is None else rng.split(), dtype=dtype)
        w1, w2 = cfg.up_dims
        self.up1 = Conv2d(cf, 4 * w1, 3, padding=1, rng=None if rng is None else rng.split(), dtype=dtype)
        self.up2 = Conv2d(w1, 4 * w2, 3, padding=1, rng=None if rng is None else rng.split(), dtype=dtype)
        self.out = Conv2d(w2, 1, 3, padding=1, rng=None if rng is None else rng.split(), dtype=dtype)

    def forward(self, features: list[Tensor]) -> Tensor:
        if len(features) != len(self.laterals) + 1:
            raise InvalidArgument(f"expected {len(self.laterals) + 1} feature scales, got {len(features)}")
        deep = features[-1]
        hw = deep.shape[2:]
        pooled = [deep]
        for conv, s in zip(self.pool_convs, self.cfg.pool_scales):
            p = ops.relu(conv(ops.adaptive_avg_pool2d(deep, (s, s))))
            pooled.append(ops.bilinear_resize(p, hw))
        top = ops.relu(self.pool_bottleneck(ops.concat(pooled, axis=1)))

        # top-down accumulation onto the 1x1 laterals, then per-level 3x3 convs
        pyramid = [lat(f) for lat, f in zip(self.laterals, features[:-1])] + [top]
        for i in range(len(pyramid) - 2, -1, -1):
            pyramid[i] = pyramid[i] + ops.bilinear_resize(pyramid[i + 1], pyramid[i].shape[2:])
        outs = [ops.relu(conv(p)) for conv, p in zip(self.fpn_convs, pyramid[:-1])] + [pyramid[-1]]

        base_hw = outs[0].shape[2:]
        fused = ops.concat([outs[0]] + [ops.bilinear_resize(o, base_hw) for o in outs[1:]], axis=1)
        x = ops.relu(self.fusion(fused))
        x = ops.relu(ops.pixel_shuffle(self.up1(x), 2))
        x = ops.relu(ops.pixel_shuffle(self.up2(x), 2))
        return ops.relu(self.out(x))


class GfmRegressor(Module):
    """Windowed-attention encoder with the pixel-shuffle regression decoder."""

    def __init__(self, swin_cfg: SwinConfig, head_cfg: RegressionHeadConfig,
                 rng: Optional[Prng] = None, dtype=np.float32):
        super().__init__()
        self.encoder = SwinEncoder(swin_cfg, rng=rng, dtype=dtype)
        self.head = RegressionHead(swin_cfg.stage_dims(), head_cfg, rng=rng, dtype=dtype)

    def forward(self, image: Tensor) -> Tensor:
        return self.head(self.encoder(image))
