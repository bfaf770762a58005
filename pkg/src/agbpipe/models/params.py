"""Named parameter maps with trainable flags and encoder/decoder tags."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..numcore.tensor import Tensor
from .module import Module


@dataclass
class ModelParams:
    tensors: dict[str, Tensor] = field(default_factory=dict)
    trainable: dict[str, bool] = field(default_factory=dict)
    tags: dict[str, str] = field(default_factory=dict)  # "encoder" | "decoder"

    def trainable_tensors(self) -> dict[str, Tensor]:
        return {n: t for n, t in self.tensors.items() if self.trainable[n]}

    def add(self, name: str, tensor: Tensor, tag: str, trainable: bool = True) -> None:
        if name in self.tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        self.tensors[name] = tensor
        self.trainable[name] = trainable
        self.tags[name] = tag


def collect_params(model: Module, encoder_prefixes: tuple[str, ...] = ("encoder.",)) -> ModelParams:
    """Flatten a module tree; names starting with an encoder prefix get the
    encoder tag, everything else counts as decoder."""
    mp = ModelParams()
    for name, p in model.named_parameters():
        tag = "encoder" if any(name.startswith(pre) for pre in encoder_prefixes) else "decoder"
        mp.add(name, p, tag)
    return mp


def count_params(mp: ModelParams, trainable_only: bool = False) -> int:
    total = 0
    for name, t in mp.tensors.items():
        if trainable_only and not mp.trainable[name]:
            continue
        total += t.size
    return total


def freeze_encoder(mp: ModelParams) -> ModelParams:
    """Mark encoder-tagged parameters non-trainable and stop recording their grads."""
    for name, tag in mp.tags.items():
        if tag == "encoder":
            mp.trainable[name] = False
            mp.tensors[name].requires_grad = False
    return mp


def params_checksum(mp: ModelParams, tag: str | None = None) -> str:
    """Order-stable SHA-256 over the raw parameter bytes (optionally one tag)."""
    h = hashlib.sha256()
    for name in sorted(mp.tensors):
        if tag is not None and mp.tags[name] != tag:
            continue
        h.update(name.encode())
        h.update(np.ascontiguousarray(mp.tensors[name].data).tobytes())
    return h.hexdigest()
