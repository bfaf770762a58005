"""Georeferenced multi-band rasters with nodata semantics, plus file IO.

On disk a raster is a pair: ``<name>.bin`` holding the little-endian f32
buffer (row-major within band, bands outermost) and ``<name>.json`` with the
grid metadata. Scenes add a single-band cloud mask (codes 0 clear, 1 cloud or
shadow, 2 nodata) and an acquisition date; a directory of scenes carries a
``scenes.json`` index.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidArgument, ParseError

NODATA = -9999.0

HLS_BANDS = ["blue", "green", "red", "nir_narrow", "swir1", "swir2"]

CLEAR, CLOUD, MASK_NODATA = 0, 1, 2


@dataclass
class Raster:
    data: np.ndarray  # [bands, H, W] float32
    band_names: list[str] = field(default_factory=list)
    nodata: float = NODATA
    geotransform: tuple[float, float, float, float] = (0.0, 0.0, 1.0, -1.0)  # ox, oy, px, py
    epsg: int = 4326

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise InvalidArgument(f"raster data must be [bands, H, W], got {self.data.shape}")
        if not self.band_names:
            self.band_names = [f"band{i + 1}" for i in range(self.data.shape[0])]
        if len(self.band_names) != self.data.shape[0]:
            raise InvalidArgument("band_names length must match band count")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def grid_key(self) -> tuple:
        return (self.width, self.height, self.geotransform, self.epsg)

    def world_to_pixel(self, lon: float, lat: float) -> tuple[int, int] | None:
        """(row, col) of the pixel containing the point, or None if outside."""
        ox, oy, px, py = self.geotransform
        col = int(np.floor((lon - ox) / px))
        row = int(np.floor((lat - oy) / py))
        if 0 <= row < self.height and 0 <= col < self.width:
            return row, col
        return None

    def pixel_center(self, row: int, col: int) -> tuple[float, float]:
        ox, oy, px, py = self.geotransform
        return ox + (col + 0.5) * px, oy + (row + 0.5) * py


@dataclass
class Scene:
    image: Raster
    cloud_mask: Raster
    timestamp: dt.date

    def __post_init__(self):
        if self.cloud_mask.data.shape[1:] != self.image.data.shape[1:]:
            raise InvalidArgument("cloud mask grid must match image grid")
        if self.cloud_mask.bands != 1:
            raise InvalidArgument("cloud mask must be single-band")


def _strip(path: str | Path) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".bin", ".json") else p


def write_raster(path: str | Path, raster: Raster, extra_meta: dict | None = None) -> None:
    base = _strip(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "width": raster.width,
        "height": raster.height,
        "bands": raster.bands,
        "band_names": raster.band_names,
        "nodata": raster.nodata,
        "geotransform": list(raster.geotransform),
        "epsg": raster.epsg,
    }
    if extra_meta:
        meta.update(extra_meta)
    base.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    with open(base.with_suffix(".bin"), "wb") as fh:
        fh.write(np.ascontiguousarray(raster.data, dtype="<f4").tobytes())


def read_raster(path: str | Path) -> Raster:
    base = _strip(path)
    try:
        meta = json.loads(base.with_suffix(".json").read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"{base}.json: cannot read raster sidecar ({e})") from e
    for key in ("width", "height", "bands", "nodata", "geotransform", "epsg"):
        if key not in meta:
            raise ParseError(f"{base}.json: missing key {key!r}")
    n = meta["bands"] * meta["height"] * meta["width"]
    raw = np.fromfile(base.with_suffix(".bin"), dtype="<f4")
    if raw.size != n:
        raise ParseError(f"{base}.bin: expected {n} values, found {raw.size}")
    return Raster(
        data=raw.reshape(meta["bands"], meta["height"], meta["width"]),
        band_names=list(meta.get("band_names", [])),
        nodata=float(meta["nodata"]),
        geotransform=tuple(meta["geotransform"]),
        epsg=int(meta["epsg"]),
    )


def write_scenes(dirpath: str | Path, scenes: list[Scene]) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    index = []
    for i, sc in enumerate(scenes):
        img, msk = f"scene_{i:03d}", f"scene_{i:03d}_mask"
        write_raster(d / img, sc.image)
        write_raster(d / msk, sc.cloud_mask)
        index.append({"image": img, "mask": msk, "date": sc.timestamp.isoformat()})
    (d / "scenes.json").write_text(json.dumps({"scenes": index}, sort_keys=True, indent=1) + "\n")


def read_scenes(dirpath: str | Path) -> list[Scene]:
    d = Path(dirpath)
    try:
        index = json.loads((d / "scenes.json").read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"{d}/scenes.json: cannot read scene index ({e})") from e
    out = []
    for ent in index["scenes"]:
        out.append(
            Scene(
                image=read_raster(d / ent["image"]),
                cloud_mask=read_raster(d / ent["mask"]),
                timestamp=dt.date.fromisoformat(ent["date"]),
            )
        )
    return out
