"""Bin-wise RMSE over valid pixels, stratified by eco-region.

Pixels are grouped by their ground-truth label into left-closed right-open
intervals; the last interval is open above. Bins that receive no pixels
report a null RMSE, never zero. The overall RMSE is pixel-pooled, which makes
pooled-RMSE^2 exactly the count-weighted mean of the per-bin RMSE^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DataError, EmptyLabelsError, InvalidArgument

DEFAULT_EDGES = (0.0, 50.0, 100.0, 200.0, 300.0, 400.0)


@dataclass(frozen=True)
class BinSpec:
    """Ordered finite edges (Mg/ha); an implicit open top bin is appended."""

    edges: tuple[float, ...] = DEFAULT_EDGES

    def __post_init__(self):
        e = self.edges
        if len(e) < 1 or e[0] != 0.0:
            raise InvalidArgument("bin edges must start at 0")
        if any(b <= a for a, b in zip(e, e[1:])):
            raise InvalidArgument("bin edges must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return len(self.edges)

    def bounds(self, i: int) -> tuple[float, float]:
        hi = self.edges[i + 1] if i + 1 < len(self.edges) else math.inf
        return self.edges[i], hi

    def label(self, i: int) -> str:
        lo, hi = self.bounds(i)
        return f"{lo:g}-{hi:g}" if math.isfinite(hi) else f"{lo:g}+"

    def index_of(self, values: np.ndarray) -> np.ndarray:
        return np.clip(np.digitize(values, self.edges[1:], right=False), 0, self.n_bins - 1)


@dataclass
class BinStat:
    lo: float
    hi: float
    n: int
    rmse: Optional[float]


@dataclass
class StratumStats:
    n: int
    rmse: Optional[float]
    bins: list[BinStat]


@dataclass
class EvalReport:
    model_id: str
    dataset_id: str
    seed: int
    config_hash: str
    edges: tuple[float, ...]
    strata: dict[str, StratumStats] = field(default_factory=dict)  # "all" plus eco-regions

    @property
    def overall(self) -> StratumStats:
        return self.strata["all"]


def _accumulate(pred: np.ndarray, label: np.ndarray, bins: BinSpec) -> tuple[np.ndarray, np.ndarray]:
    idx = bins.index_of(label)
    sq = (pred.astype(np.float64) - label.astype(np.float64)) ** 2
    ss = np.bincount(idx, weights=sq, minlength=bins.n_bins)
    n = np.bincount(idx, minlength=bins.n_bins)
    return ss, n


def _stats_from(ss: np.ndarray, n: np.ndarray, bins: BinSpec) -> StratumStats:
    total_n = int(n.sum())
    total = math.sqrt(ss.sum() / total_n) if total_n else None
    out = []
    for i in range(bins.n_bins):
        lo, hi = bins.bounds(i)
        out.append(BinStat(lo, hi, int(n[i]), math.sqrt(ss[i] / n[i]) if n[i] else None))
    return StratumStats(n=total_n, rmse=total, bins=out)


def binwise_rmse(pred, label, valid, bins: BinSpec = BinSpec()) -> StratumStats:
    """Per-bin (n, RMSE) plus pixel-pooled overall RMSE over the valid pixels.

    Accepts single grids or sequences of grids with matching shapes.
    """
    preds = [pred] if isinstance(pred, np.ndarray) else list(pred)
    labels = [label] if isinstance(label, np.ndarray) else list(label)
    valids = [valid] if isinstance(valid, np.ndarray) else list(valid)
    if not (len(preds) == len(labels) == len(valids)):
        raise InvalidArgument("pred/label/valid sequences must have equal length")
    ss = np.zeros(bins.n_bins)
    n = np.zeros(bins.n_bins, dtype=np.int64)
    for p, l, v in zip(preds, labels, valids):
        if p.shape != l.shape or p.shape != v.shape:
            raise InvalidArgument(f"grid shape mismatch: {p.shape} / {l.shape} / {v.shape}")
        m = np.asarray(v, dtype=bool)
        if not m.any():
            continue
        s, c = _accumulate(p[m], l[m], bins)
        ss += s
        n += c
    if n.sum() == 0:
        raise EmptyLabelsError("no valid pixels to evaluate")
    return _stats_from(ss, n, bins)


def stratified_report(
    tile_preds: dict[str, np.ndarray],
    tiles,
    bins: BinSpec = BinSpec(),
    model_id: str = "model",
    dataset_id: str = "dataset",
    seed: int = 0,
    config_hash: str = "",
) -> EvalReport:
    """All-regions stats plus one sub-stratum per eco-region present.

    `tiles` are the evaluation tiles (typically the validation split); every
    one of them must have a prediction in `tile_preds`.
    """
    missing = [t.tile_id for t in tiles if t.tile_id not in tile_preds]
    if missing:
        raise DataError(f"missing predictions for {len(missing)} tile(s): {', '.join(sorted(missing)[:8])}")
    if not tiles:
        raise EmptyLabelsError("no tiles to evaluate")

    acc: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def bump(key: str, s, c) -> None:
        if key not in acc:
            acc[key] = (np.zeros(bins.n_bins), np.zeros(bins.n_bins, dtype=np.int64))
        acc[key][0][:] += s
        acc[key][1][:] += c

    for t in sorted(tiles, key=lambda t: t.tile_id):
        m = t.valid
        if not m.any():
            continue
        s, c = _accumulate(tile_preds[t.tile_id][m], t.label[m], bins)
        bump("all", s, c)
        bump(t.ecoregion, s, c)

    if "all" not in acc:
        raise EmptyLabelsError("no valid pixels in any evaluation tile")

    report = EvalReport(model_id=model_id, dataset_id=dataset_id, seed=seed, config_hash=config_hash, edges=bins.edges)
    report.strata["all"] = _stats_from(*acc["all"], bins)
    for region in sorted(k for k in acc if k != "all"):
        report.strata[region] = _stats_from(*acc[region], bins)
    return report
