"""Build models from serialized config dicts (used by checkpoints and the CLI)."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import InvalidArgument
from ..numcore.rng import Prng
from .heads import GfmRegressor, RegressionHeadConfig, head_preset
from .simmim import SimMIMConfig, SimMIMPretrainer, simmim_preset
from .swin import SwinConfig, SwinEncoder, swin_preset
from .unet import UNet, UNetConfig, unet_preset


def model_config(kind: str, preset: str, **section_overrides) -> dict:
    """Canonical serializable description of one model."""
    cfg = {"kind": kind, "preset": preset}
    if kind in ("gfm", "simmim"):
        cfg["swin"] = swin_preset(preset, **section_overrides.get("swin", {})).to_dict()
    if kind == "gfm":
        cfg["head"] = head_preset(preset, **section_overrides.get("head", {})).to_dict()
    elif kind == "simmim":
        cfg["simmim"] = simmim_preset(preset, **section_overrides.get("simmim", {})).to_dict()
    elif kind == "unet":
        cfg["unet"] = unet_preset(preset, **section_overrides.get("unet", {})).to_dict()
    elif kind != "gfm":
        raise InvalidArgument(f"unknown model kind {kind!r}")
    return cfg


def _swin_from(d: dict) -> SwinConfig:
    d = dict(d)
    d["depths"] = tuple(d["depths"])
    d["heads"] = tuple(d["heads"])
    return SwinConfig(**d)


def build_model(cfg: dict, rng: Optional[Prng] = None, dtype=np.float32):
    kind = cfg.get("kind")
    if kind == "gfm":
        hd = dict(cfg["head"])
        hd["pool_scales"] = tuple(hd["pool_scales"])
        hd["up_dims"] = tuple(hd["up_dims"])
        return GfmRegressor(_swin_from(cfg["swin"]), RegressionHeadConfig(**hd), rng=rng, dtype=dtype)
    if kind == "simmim":
        enc = SwinEncoder(_swin_from(cfg["swin"]), rng=rng, dtype=dtype)
        return SimMIMPretrainer(enc, SimMIMConfig(**cfg["simmim"]), rng=rng, dtype=dtype)
    if kind == "unet":
        return UNet(UNetConfig(**cfg["unet"]), rng=rng, dtype=dtype)
    raise InvalidArgument(f"unknown model kind {kind!r}")
