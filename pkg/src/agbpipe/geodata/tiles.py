"""Tiling a composite into training units, normalization, and dataset splits.

A LabeledTile couples a fixed-size image stack with a sparse label grid and
its validity mask. Datasets live on disk as one container file per tile plus
a JSON manifest carrying the split assignment, per-band normalization stats
(computed on the finetune split only), and the creation seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import blobio
from ..errors import DataError, InvalidArgument
from ..numcore.rng import Prng
from .raster import Raster

log = logging.getLogger(__name__)

ENCODER_STRIDE = 32  # tile sizes must divide cleanly through the encoder


@dataclass
class LabeledTile:
    tile_id: str
    image: np.ndarray  # [6, T, T] float32
    label: np.ndarray  # [T, T] float32, nodata where invalid
    valid: np.ndarray  # [T, T] bool
    ecoregion: str
    origin_rc: tuple[int, int] = (0, 0)
    origin_world: tuple[float, float] = (0.0, 0.0)

    @property
    def size(self) -> int:
        return self.image.shape[1]


@dataclass
class TileEntry:
    tile_id: str
    path: str
    split: str  # "finetune" | "validation"
    ecoregion: str
    n_valid: int


@dataclass
class DatasetManifest:
    seed: int
    tiles: list[TileEntry] = field(default_factory=list)
    band_mean: Optional[list[float]] = None
    band_std: Optional[list[float]] = None
    config_hash: str = ""

    def split_ids(self, split: str) -> list[str]:
        return [t.tile_id for t in self.tiles if t.split == split]

    def to_dict(self) -> dict:
        return {
            "kind": "agbpipe-manifest",
            "seed": self.seed,
            "config_hash": self.config_hash,
            "band_mean": self.band_mean,
            "band_std": self.band_std,
            "tiles": [vars(t) for t in self.tiles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        m = cls(seed=d["seed"], config_hash=d.get("config_hash", ""))
        m.band_mean = d.get("band_mean")
        m.band_std = d.get("band_std")
        m.tiles = [TileEntry(**t) for t in d["tiles"]]
        ids = [t.tile_id for t in m.tiles]
        if len(set(ids)) != len(ids):
            raise DataError("manifest lists a tile more than once")
        return m


def tile_dataset(
    composite: Raster,
    label: np.ndarray,
    valid: np.ndarray,
    ecomap: Raster,
    T: int,
    stride: int,
    max_nodata_frac: float = 0.5,
    allow_unlabeled: bool = False,
) -> list[LabeledTile]:
    """Cut aligned windows; drop those too holey or without any valid label.

    Window eco-region is the majority map code over its footprint (code 4
    counts as EC3). Remaining nodata image pixels are filled with the
    composite-wide per-band mean so tensors stay dense; labels stay governed
    by the validity mask alone.
    """
    if T % ENCODER_STRIDE:
        raise InvalidArgument(f"tile size {T} must be divisible by {ENCODER_STRIDE}")
    if stride < 1:
        raise InvalidArgument("stride must be >= 1")
    H, W = composite.height, composite.width
    if T > H or T > W:
        raise InvalidArgument(f"tile size {T} exceeds raster extent {H}x{W}")
    if label.shape != (H, W) or valid.shape != (H, W):
        raise InvalidArgument("label/valid grids must match the composite grid")
    if ecomap.data.shape[1:] != (H, W):
        raise InvalidArgument("eco-region map must match the composite grid")

    nodata_px = np.any(composite.data == composite.nodata, axis=0)  # [H, W]
    fill = np.zeros(composite.bands, dtype=np.float32)
    for b in range(composite.bands):
        ok = composite.data[b] != composite.nodata
        fill[b] = composite.data[b][ok].mean() if ok.any() else 0.0

    codes = np.rint(ecomap.data[0]).astype(np.int64)
    codes = np.where(codes == 4, 3, codes)

    ox, oy, px, py = composite.geotransform
    tiles: list[LabeledTile] = []
    n_holey = n_unlabeled = n_unregioned = n_filled = 0
    for r0 in range(0, H - T + 1, stride):
        for c0 in range(0, W - T + 1, stride):
            win = (slice(r0, r0 + T), slice(c0, c0 + T))
            holes = nodata_px[win]
            if holes.mean() > max_nodata_frac:
                n_holey += 1
                continue
            v = valid[win]
            if not allow_unlabeled and not v.any():
                n_unlabeled += 1
                continue
            c = codes[win]
            in_range = (c >= 1) & (c <= 3)
            if not in_range.any():
                n_unregioned += 1
                continue
            counts = np.bincount(c[in_range], minlength=4)[1:4]
            eco = f"EC{int(np.argmax(counts)) + 1}"
            img = composite.data[:, win[0], win[1]].copy()
            if holes.any():
                n_filled += int(holes.sum())
                img[:, holes] = fill[:, None]
            tiles.append(
                LabeledTile(
                    tile_id=f"tile_r{r0:05d}_c{c0:05d}",
                    image=img,
                    label=label[win].copy(),
                    valid=v.copy(),
                    ecoregion=eco,
                    origin_rc=(r0, c0),
                    origin_world=(ox + c0 * px, oy + r0 * py),
                )
            )
    log.info(
        "tiling: kept %d, dropped %d holey / %d unlabeled / %d without eco-region; filled %d nodata pixels",
        len(tiles), n_holey, n_unlabeled, n_unregioned, n_filled,
    )
    return tiles


def band_stats(tiles: list[LabeledTile]) -> tuple[np.ndarray, np.ndarray]:
    """Per-band mean/std over every pixel of the given tiles. Degenerate bands
    get std forced to 1 with a warning."""
    if not tiles:
        raise DataError("cannot compute normalization stats without tiles")
    stack = np.stack([t.image for t in tiles]).astype(np.float64)  # [N, 6, T, T]
    mean = stack.mean(axis=(0, 2, 3))
    std = stack.std(axis=(0, 2, 3))
    bad = std == 0
    if bad.any():
        log.warning("degenerate bands %s: std forced to 1", np.nonzero(bad)[0].tolist())
        std = np.where(bad, 1.0, std)
    return mean.astype(np.float32), std.astype(np.float32)


def normalize_tiles(tiles: list[LabeledTile], mean: np.ndarray, std: np.ndarray) -> list[LabeledTile]:
    mean = np.asarray(mean, dtype=np.float32)[:, None, None]
    std = np.asarray(std, dtype=np.float32)[:, None, None]
    out = []
    for t in tiles:
        out.append(
            LabeledTile(
                tile_id=t.tile_id,
                image=(t.image - mean) / std,
                label=t.label,
                valid=t.valid,
                ecoregion=t.ecoregion,
                origin_rc=t.origin_rc,
                origin_world=t.origin_world,
            )
        )
    return out


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_dataset(tiles: list[LabeledTile], validation_fraction: float, seed: int) -> DatasetManifest:
    """Stratified split: each eco-region's tiles split independently at the
    given fraction (rounding half-up), deterministic under the seed.
    Regions with fewer than two tiles go entirely to finetune."""
    if not (0.0 < validation_fraction < 1.0):
        raise InvalidArgument("validation fraction must lie strictly between 0 and 1")
    rng = Prng(seed)
    by_region: dict[str, list[LabeledTile]] = {}
    for t in tiles:
        by_region.setdefault(t.ecoregion, []).append(t)

    manifest = DatasetManifest(seed=seed)
    assignment: dict[str, str] = {}
    for ridx, region in enumerate(sorted(by_region)):
        group = sorted(by_region[region], key=lambda t: t.tile_id)
        n = len(group)
        if n < 2:
            log.warning("eco-region %s has %d tile(s); all assigned to finetune", region, n)
            n_val = 0
        else:
            n_val = _round_half_up(validation_fraction * n)
            if n_val >= n:
                log.warning("eco-region %s: clamping validation count %d to %d", region, n_val, n - 1)
                n_val = n - 1
        order = rng.child(0xEC0, ridx).permutation(n)
        for pos, idx in enumerate(order):
            assignment[group[idx].tile_id] = "validation" if pos < n_val else "finetune"

    for t in tiles:
        manifest.tiles.append(
            TileEntry(
                tile_id=t.tile_id,
                path=f"tiles/{t.tile_id}.tile",
                split=assignment[t.tile_id],
                ecoregion=t.ecoregion,
                n_valid=int(t.valid.sum()),
            )
        )
    return manifest


def save_dataset(dirpath: str | Path, tiles: list[LabeledTile], manifest: DatasetManifest) -> None:
    d = Path(dirpath)
    (d / "tiles").mkdir(parents=True, exist_ok=True)
    by_id = {t.tile_id: t for t in tiles}
    for entry in manifest.tiles:
        t = by_id[entry.tile_id]
        blobio.write_container(
            d / entry.path,
            {
                "tile_id": t.tile_id,
                "ecoregion": t.ecoregion,
                "origin_rc": list(t.origin_rc),
                "origin_world": list(t.origin_world),
            },
            {"image": t.image, "label": t.label, "valid": t.valid},
        )
    (d / "manifest.json").write_text(json.dumps(manifest.to_dict(), sort_keys=True, indent=1) + "\n")


def load_manifest(dirpath: str | Path) -> DatasetManifest:
    d = Path(dirpath)
    try:
        doc = json.loads((d / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"{d}/manifest.json: cannot read manifest ({e})") from e
    if doc.get("kind") != "agbpipe-manifest":
        raise DataError(f"{d}/manifest.json: not a dataset manifest")
    return DatasetManifest.from_dict(doc)


def load_tiles(dirpath: str | Path, manifest: DatasetManifest, split: Optional[str] = None) -> list[LabeledTile]:
    d = Path(dirpath)
    out = []
    for entry in manifest.tiles:
        if split is not None and entry.split != split:
            continue
        meta, arrays = blobio.read_container(d / entry.path)
        out.append(
            LabeledTile(
                tile_id=meta["tile_id"],
                image=arrays["image"],
                label=arrays["label"],
                valid=arrays["valid"].astype(bool),
                ecoregion=meta["ecoregion"],
                origin_rc=tuple(meta["origin_rc"]),
                origin_world=tuple(meta["origin_world"]),
            )
        )
    return out
