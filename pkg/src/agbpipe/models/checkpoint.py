"""Versioned checkpoint container: config, named f32 blobs, optimizer state, epoch.

Round-trips restore training bit-exactly: parameter buffers, Adam moments and
step count, and the model config all come back unchanged. Loading refuses a
checkpoint whose model config does not match the requested one.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .. import blobio
from ..errors import CheckpointError
from ..numcore.optim import AdamState
from .params import ModelParams

FORMAT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    model_id: str,
    model_cfg: dict,
    params: ModelParams,
    opt: Optional[AdamState] = None,
    epoch: int = 0,
    seed: int = 0,
    config_hash: str = "",
) -> None:
    meta = {
        "kind": "agbpipe-checkpoint",
        "format_version": FORMAT_VERSION,
        "model_id": model_id,
        "model_config": model_cfg,
        "epoch": epoch,
        "seed": seed,
        "config_hash": config_hash,
        "params": [
            {"name": n, "trainable": params.trainable[n], "tag": params.tags[n]} for n in params.tensors
        ],
        "optimizer": None if opt is None else {"beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps, "t": opt.t},
    }
    arrays: dict[str, np.ndarray] = {}
    for n, t in params.tensors.items():
        arrays[f"p.{n}"] = t.data
    if opt is not None:
        for n, m in opt.m.items():
            arrays[f"m.{n}"] = m
        for n, v in opt.v.items():
            arrays[f"v.{n}"] = v
    blobio.write_container(path, meta, arrays)


def load_checkpoint(path: str | Path) -> dict:
    meta, arrays = blobio.read_container(path)
    if meta.get("kind") != "agbpipe-checkpoint":
        raise CheckpointError(f"{path}: not a checkpoint file")
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
    params = {e["name"]: arrays[f"p.{e['name']}"] for e in meta["params"]}
    opt = None
    if meta["optimizer"] is not None:
        o = meta["optimizer"]
        opt = AdamState(beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], t=o["t"])
        opt.m = {e["name"]: arrays[f"m.{e['name']}"] for e in meta["params"] if f"m.{e['name']}" in arrays}
        opt.v = {e["name"]: arrays[f"v.{e['name']}"] for e in meta["params"] if f"v.{e['name']}" in arrays}
    return {"meta": meta, "params": params, "optimizer": opt}


def check_config_match(meta: dict, expected_cfg: dict, path: str = "") -> None:
    if meta["model_config"] != expected_cfg:
        got = json.dumps(meta["model_config"], sort_keys=True)
        want = json.dumps(expected_cfg, sort_keys=True)
        raise CheckpointError(f"{path}: checkpoint config mismatch\n  saved:    {got}\n  expected: {want}")


def restore_params(mp: ModelParams, saved: dict[str, np.ndarray], prefix: str = "", path: str = "") -> int:
    """Copy saved arrays into matching parameters (optionally only one prefix).

    Returns the number of tensors restored; any missing name or shape
    mismatch refuses the load.
    """
    n = 0
    for name, t in mp.tensors.items():
        if prefix and not name.startswith(prefix):
            continue
        if name not in saved:
            raise CheckpointError(f"{path}: checkpoint is missing parameter {name!r}")
        arr = saved[name]
        if tuple(arr.shape) != tuple(t.shape):
            raise CheckpointError(f"{path}: shape mismatch for {name!r}: {arr.shape} vs {t.shape}")
        t.data = arr.astype(t.dtype, copy=True)
        n += 1
    return n
