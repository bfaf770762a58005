"""U-Net baseline for pixel-wise regression (bilinear upsampling variant).

Classic contracting/expanding layout with skip connections, two 3x3 convs per
level, max-pool downsampling, and a non-negative single-channel output. The
full-scale width lands near 7.8M parameters.
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


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 6
    base: int = 32
    depth: int = 4

    def to_dict(self) -> dict:
        return {"in_channels": self.in_channels, "base": self.base, "depth": self.depth}


def unet_preset(name: str, **overrides) -> UNetConfig:
    base = {"paper": UNetConfig(base=32), "toy": UNetConfig(base=8)}
    if name not in base:
        raise InvalidArgument(f"unknown baseline preset {name!r}")
    d = base[name].to_dict()
    d.update(overrides)
    return UNetConfig(**d)


class DoubleConv(Module):
    def __init__(self, c_in: int, c_out: int, rng, dtype):
        super().__init__()
        self.conv1 = Conv2d(c_in, c_out, 3, padding=1, rng=None if rng is None else rng.split(), dtype=dtype)
        self.conv2 = Conv2d(c_out, c_out, 3, padding=1, rng=None if rng is None else rng.split(), dtype=dtype)

    def forward(self, x):
        return ops.relu(self.conv2(ops.relu(self.conv1(x))))


class UNet(Module):
    def __init__(self, cfg: UNetConfig, rng: Optional[Prng] = None, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        widths = [cfg.base * 2**i for i in range(cfg.depth + 1)]  # e.g. 32..512
        self.enc = [DoubleConv(cfg.in_channels if i == 0 else widths[i - 1], widths[i], rng, dtype)
                    for i in range(cfg.depth)]
        self.bottleneck = DoubleConv(widths[cfg.depth - 1], widths[cfg.depth], rng, dtype)
        self.dec = [DoubleConv(widths[i + 1] + widths[i], widths[i], rng, dtype)
                    for i in range(cfg.depth - 1, -1, -1)]
        self.out = Conv2d(widths[0], 1, 1, rng=None if rng is None else rng.split(), dtype=dtype)

    def forward(self, image: Tensor) -> Tensor:
        B, C, H, W = image.shape
        div = 2**self.cfg.depth
        if H % div or W % div:
            raise InvalidArgument(f"input {H}x{W} must be divisible by {div}")
        if C != self.cfg.in_channels:
            raise InvalidArgument(f"expected {self.cfg.in_channels} channels, got {C}")
        skips = []
        x = image
        for block in self.enc:
            x = block(x)
            skips.append(x)
            x = ops.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for block, skip in zip(self.dec, reversed(skips)):
            x = ops.bilinear_resize(x, skip.shape[2:])
            x = block(ops.concat([x, skip], axis=1))
        return ops.relu(self.out(x))
