"""Model zoo: windowed-attention encoder, pretraining head, regression heads, U-Net."""

from .module import Module, Parameter, Linear, LayerNorm, Conv2d
from .params import ModelParams, collect_params, count_params, freeze_encoder, params_checksum
from .swin import SwinConfig, SwinEncoder, swin_preset
from .simmim import SimMIMConfig, SimMIMPretrainer, simmim_preset, sample_patch_mask
from .heads import RegressionHeadConfig, RegressionHead, GfmRegressor, head_preset
from .unet import UNetConfig, UNet, unet_preset
from .checkpoint import save_checkpoint, load_checkpoint, restore_params

__all__ = [
    "Module", "Parameter", "Linear", "LayerNorm", "Conv2d",
    "ModelParams", "collect_params", "count_params", "freeze_encoder", "params_checksum",
    "SwinConfig", "SwinEncoder", "swin_preset",
    "SimMIMConfig", "SimMIMPretrainer", "simmim_preset", "sample_patch_mask",
    "RegressionHeadConfig", "RegressionHead", "GfmRegressor", "head_preset",
    "UNetConfig", "UNet", "unet_preset",
    "save_checkpoint", "load_checkpoint", "restore_params",
]
