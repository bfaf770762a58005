"""Sparse point measurements: CSV IO, eco-region assignment, rasterization.

Eco-regions are EC1..EC3; raw map code 4 (flooded grasslands/savannas) is
merged into EC3. Rasterization drops each point into the pixel containing its
coordinate and averages multiple points per pixel.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ParseError
from .raster import Raster

log = logging.getLogger(__name__)

ECOREGIONS = ("EC1", "EC2", "EC3")

CSV_HEADER = ["lon", "lat", "agb_mgha", "date", "ecoregion"]


@dataclass
class PointMeasurement:
    lon: float
    lat: float
    agb: float  # Mg/ha
    date: dt.date
    ecoregion: Optional[str] = None

    def __post_init__(self):
        if not math.isfinite(self.agb) or self.agb < 0:
            raise ParseError(f"agb must be finite and non-negative, got {self.agb}")
        if not (-180.0 <= self.lon <= 180.0 and -90.0 <= self.lat <= 90.0):
            raise ParseError(f"coordinates out of range: ({self.lon}, {self.lat})")
        if self.ecoregion is not None and self.ecoregion not in ECOREGIONS:
            raise ParseError(f"unknown eco-region {self.ecoregion!r}")


def read_points_csv(path: str | Path) -> list[PointMeasurement]:
    """Parse `lon,lat,agb_mgha,date[,ecoregion]`; raises ParseError with the
    offending line number."""
    points = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip().lower() for h in header]
        if header[:4] != CSV_HEADER[:4]:
            raise ParseError(f"{path}: line 1: expected header {','.join(CSV_HEADER[:4])}[,ecoregion]")
        has_eco = len(header) >= 5 and header[4] == "ecoregion"
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                eco = row[4].strip() if has_eco and len(row) > 4 and row[4].strip() else None
                if eco is not None and eco.isdigit():
                    eco = f"EC{min(int(eco), 3)}"
                points.append(
                    PointMeasurement(
                        lon=float(row[0]),
                        lat=float(row[1]),
                        agb=float(row[2]),
                        date=dt.date.fromisoformat(row[3].strip()),
                        ecoregion=eco,
                    )
                )
            except (ValueError, IndexError, ParseError) as e:
                raise ParseError(f"{path}: line {lineno}: {e}") from None
    return points


def write_points_csv(path: str | Path, points: list[PointMeasurement]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for p in points:
            w.writerow([repr(p.lon), repr(p.lat), repr(p.agb), p.date.isoformat(), p.ecoregion or ""])


def assign_ecoregion(point: PointMeasurement, ecomap: Raster) -> Optional[str]:
    """EC id from the map code under the point; code 4 merges into EC3.
    Returns None (unassigned) outside the map or for codes outside 1..4."""
    loc = ecomap.world_to_pixel(point.lon, point.lat)
    if loc is None:
        return None
    code = int(round(float(ecomap.data[0, loc[0], loc[1]])))
    if code == 4:
        return "EC3"
    if 1 <= code <= 3:
        return f"EC{code}"
    return None


def assign_all(points: list[PointMeasurement], ecomap: Raster) -> tuple[list[PointMeasurement], int]:
    """Fill missing eco-regions from the map; drop unassignable points (counted)."""
    kept, dropped = [], 0
    for p in points:
        eco = p.ecoregion or assign_ecoregion(p, ecomap)
        if eco is None:
            dropped += 1
            continue
        kept.append(PointMeasurement(p.lon, p.lat, p.agb, p.date, eco))
    if dropped:
        log.warning("excluded %d points with no eco-region assignment", dropped)
    return kept, dropped


def rasterize_labels(points: list[PointMeasurement], grid: Raster) -> tuple[np.ndarray, np.ndarray, dict]:
    """Bin points into grid pixels.

    Returns (label [H,W] f32 with grid.nodata where unlabeled, valid bool
    [H,W], stats). Pixels hit by several points take the mean. Points outside
    the grid are counted in stats, not errors; zero in-grid points is left to
    the caller to treat as fatal (stats['n_inside'] == 0).
    """
    ox, oy, px, py = grid.geotransform
    if px == 0 or py == 0:
        raise ParseError("grid geotransform is not invertible")
    H, W = grid.height, grid.width
    sums = np.zeros((H, W), dtype=np.float64)
    counts = np.zeros((H, W), dtype=np.int64)
    n_out = 0
    for p in points:
        loc = grid.world_to_pixel(p.lon, p.lat)
        if loc is None:
            n_out += 1
            continue
        sums[loc] += p.agb
        counts[loc] += 1
    valid = counts > 0
    label = np.full((H, W), grid.nodata, dtype=np.float32)
    label[valid] = (sums[valid] / counts[valid]).astype(np.float32)
    if n_out:
        log.info("rasterize_labels: %d points outside the grid", n_out)
    return label, valid, {"n_inside": int(counts.sum()), "n_outside": n_out, "n_pixels": int(valid.sum())}
