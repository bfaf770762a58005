"""Masked-image-modeling pretraining: mask patches, reconstruct, L1 on masked pixels.

Masked patches have their stride-4 token embeddings replaced by a learned
mask token before the encoder. A single convolution on the deepest feature
followed by one pixel shuffle predicts every pixel of the image; by default
the loss reads only pixels inside masked patches (``loss_on="masked"``), with
``"all"`` available as a variant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidArgument
from ..numcore import ops
from ..numcore.rng import Prng
from ..numcore.tensor import Tensor
from .module import Conv2d, Module, Parameter
from .swin import SwinConfig, SwinEncoder


@dataclass(frozen=True)
class SimMIMConfig:
    mask_ratio: float = 0.6
    mask_patch_size: int = 8
    loss_on: str = "masked"  # or "all"

    def to_dict(self) -> dict:
        return {"mask_ratio": self.mask_ratio, "mask_patch_size": self.mask_patch_size, "loss_on": self.loss_on}


def simmim_preset(name: str, **overrides) -> SimMIMConfig:
    base = {"paper": SimMIMConfig(mask_patch_size=32), "toy": SimMIMConfig(mask_patch_size=8)}
    if name not in base:
        raise InvalidArgument(f"unknown pretraining preset {name!r}")
    d = base[name].to_dict()
    d.update(overrides)
    return SimMIMConfig(**d)


def sample_patch_mask(rng: Prng, grid: tuple[int, int], mask_ratio: float) -> np.ndarray:
    """Boolean [gh, gw] with exactly round(mask_ratio * cells) True entries."""
    gh, gw = grid
    n = gh * gw
    k = int(round(mask_ratio * n))
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[:k]] = True
    return mask.reshape(gh, gw)


class SimMIMPretrainer(Module):
    """Encoder plus mask token plus one-conv pixel-shuffle reconstruction head."""

    def __init__(self, encoder: SwinEncoder, cfg: SimMIMConfig, rng: Optional[Prng] = None, dtype=np.float32):
        super().__init__()
        swin: SwinConfig = encoder.cfg
        if cfg.mask_patch_size % swin.patch_size:
            raise InvalidArgument("mask patch size must be a multiple of the embedding patch size")
        if not (0.0 < cfg.mask_ratio < 1.0):
            raise InvalidArgument("mask ratio must lie strictly between 0 and 1")
        self.cfg = cfg
        self.encoder = encoder
        self.mask_token = Parameter(
            np.zeros(swin.embed_dim, dtype=dtype)
            if rng is None
            else rng.trunc_normal((swin.embed_dim,), std=0.02, dtype=dtype)
        )
        stride = swin.total_stride()
        self.out_stride = stride
        self.recon = Conv2d(
            swin.stage_dims()[-1], swin.in_channels * stride * stride, k=1,
            rng=None if rng is None else rng.split(), dtype=dtype,
        )

    def mask_grid(self, hw: tuple[int, int]) -> tuple[int, int]:
        mps = self.cfg.mask_patch_size
        if hw[0] % mps or hw[1] % mps:
            raise InvalidArgument(f"image {hw} not divisible by mask patch size {mps}")
        return hw[0] // mps, hw[1] // mps

    def forward(self, image: Tensor, masks: np.ndarray, target: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
        """Returns (reconstruction [B,C,H,W], scalar loss)."""
        B, C, H, W = image.shape
        gh, gw = self.mask_grid((H, W))
        masks = np.asarray(masks, dtype=bool)
        if masks.shape != (B, gh, gw):
            raise InvalidArgument(f"masks must have shape {(B, gh, gw)}, got {masks.shape}")
        if not masks.any():
            raise InvalidArgument("mask selects no patches; reconstruction loss undefined")

        f = self.cfg.mask_patch_size // self.encoder.cfg.patch_size
        m_tok = np.repeat(np.repeat(masks, f, axis=1), f, axis=2).astype(image.dtype)  # stride-4 grid
        tokens = self.encoder.embed(image)
        keep = Tensor((1.0 - m_tok)[..., None].astype(image.dtype))
        fill = Tensor(m_tok[..., None])
        tokens = tokens * keep + self.mask_token.reshape(1, 1, 1, -1) * fill
        feats = self.encoder.run_stages(tokens)
        recon = ops.pixel_shuffle(self.recon(feats[-1]), self.out_stride)

        tgt = target if target is not None else image
        diff = ops.absolute(recon - tgt)
        if self.cfg.loss_on == "all":
            loss = diff.mean()
        else:
            mps = self.cfg.mask_patch_size
            m_pix = np.repeat(np.repeat(masks, mps, axis=1), mps, axis=2).astype(image.dtype)
            n = float(m_pix.sum()) * C
            loss = (diff * Tensor(m_pix[:, None, :, :])).sum() / n
        return recon, loss
