"""Run configuration: documented defaults, strict key checking, canonical hash.

Every CLI subcommand reads the same JSON document (all fields optional).
Unknown keys are rejected. The parsed config echoes back with defaults filled
to a canonical JSON whose SHA-256 prefix is embedded in every output
artifact; the `AGB_SEED` environment variable overrides the seed.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

from .errors import ConfigError

DEFAULTS: dict = {
    "seed": 2022,
    "geodata": {
        "grid_size": 256,
        "n_scenes": 6,
        "cloud_fraction": 0.3,
        "nodata_fraction": 0.02,
        "n_points": 1500,
        "n_ecoregions": 3,
        "bumps": 40,
        "max_agb": 450.0,
        "agb_gamma": 2.2,
        "point_noise": 5.0,
        "pixel_noise": 0.01,
        "tile_size": 64,
        "stride": 64,
        "max_nodata_frac": 0.5,
        "validation_fraction": 0.25,
        "date_start": None,  # optional leaf-on window, ISO dates
        "date_end": None,
    },
    "model": {
        "preset": "toy",  # "toy" | "paper"
    },
    "pretrain": {
        "epochs": 50,
        "max_lr": 1e-4,
        "warmup_epochs": 5,
        "batch_size": 8,
        "mask_ratio": 0.6,
        "mask_patch_size": None,  # default from preset: 8 toy / 32 paper
        "loss_on": "masked",  # or "all"
        "grad_clip": None,
    },
    "finetune": {
        "epochs": 100,
        "max_lr": 2e-4,
        "warmup_epochs": 10,
        "batch_size": None,  # default from preset: 8 toy / 16 paper
        "grad_clip": None,
    },
    "baseline": {
        "epochs": 100,
        "lr": 0.01,
        "batch_size": 128,
        "grad_clip": None,
    },
    "eval": {
        "bins": [0.0, 50.0, 100.0, 200.0, 300.0, 400.0],
    },
}


def _merge(defaults: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        where = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(defaults[key], val, where + ".")
        else:
            out[key] = val
    return out


def load_config(path: str | Path | None) -> dict:
    """Defaults overlaid with the user file; seed may come from AGB_SEED."""
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: config root must be a JSON object")
    cfg = _merge(DEFAULTS, user)
    env_seed = os.environ.get("AGB_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"AGB_SEED must be an integer, got {env_seed!r}") from None
    return cfg


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]
