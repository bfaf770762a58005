"""Synthetic world generator for desk-scale end-to-end runs.

The ground-truth biomass field is a sum of random Gaussian bumps pushed
through a concave power map, which makes the point-value histogram
right-skewed with most mass below 200 Mg/ha. Band reflectances are fixed
affine functions of the biomass fraction plus per-scene jitter and pixel
noise, so the regression task is learnable and the median composite is close
to the noiseless signal. Clouds and nodata are smooth random blobs
thresholded to the requested fractions; cloudy pixels get bright bogus
values so composites that ignore the mask are visibly wrong.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from ..numcore.rng import Prng
from .points import PointMeasurement
from .raster import CLEAR, CLOUD, HLS_BANDS, MASK_NODATA, Raster, Scene

# reflectance = offset + slope * (agb / max_agb)
_BAND_MODEL = {
    "blue": (0.080, -0.020),
    "green": (0.080, 0.060),
    "red": (0.300, -0.220),
    "nir_narrow": (0.150, 0.450),
    "swir1": (0.300, -0.180),
    "swir2": (0.250, -0.180),
}


@dataclass(frozen=True)
class SynthConfig:
    grid_size: int = 256
    n_scenes: int = 6
    cloud_fraction: float = 0.3
    nodata_fraction: float = 0.02
    n_points: int = 1500
    n_ecoregions: int = 3
    bumps: int = 40
    max_agb: float = 450.0
    agb_gamma: float = 2.2
    point_noise: float = 5.0
    pixel_noise: float = 0.01
    origin: tuple[float, float] = (-60.0, -5.0)
    pixel_deg: float = 0.00027  # roughly 30 m


@dataclass
class SynthWorld:
    scenes: list[Scene]
    points: list[PointMeasurement]
    ecomap: Raster
    truth: Raster
    config: SynthConfig = field(default=None)


def _bump_field(rng: Prng, n: int, bumps: int, sigma_lo: float, sigma_hi: float) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    out = np.zeros((n, n), dtype=np.float64)
    cy = rng.uniform(bumps, 0, n, dtype=np.float64)
    cx = rng.uniform(bumps, 0, n, dtype=np.float64)
    sig = rng.uniform(bumps, sigma_lo, sigma_hi, dtype=np.float64)
    amp = rng.uniform(bumps, 0.3, 1.0, dtype=np.float64)
    for i in range(bumps):
        d2 = (yy - cy[i]) ** 2 + (xx - cx[i]) ** 2
        out += amp[i] * np.exp(-d2 / (2.0 * sig[i] ** 2))
    return out


def _blob_mask(rng: Prng, n: int, fraction: float) -> np.ndarray:
    """Smooth field thresholded so about `fraction` of pixels are True."""
    if fraction <= 0.0:
        return np.zeros((n, n), dtype=bool)
    f = _bump_field(rng, n, bumps=12, sigma_lo=n / 16, sigma_hi=n / 5)
    thr = np.quantile(f, 1.0 - fraction)
    return f > thr


def _geotransform(cfg: SynthConfig) -> tuple[float, float, float, float]:
    ox, oy = cfg.origin
    return (ox, oy, cfg.pixel_deg, -cfg.pixel_deg)


def synth_generate(cfg: SynthConfig, seed: int) -> SynthWorld:
    rng = Prng(seed)
    n = cfg.grid_size
    gt = _geotransform(cfg)

    # ground-truth biomass field
    f = _bump_field(rng.child(1), n, cfg.bumps, n / 24, n / 8)
    f = f / f.max() if f.max() > 0 else f
    agb = (cfg.max_agb * f**cfg.agb_gamma).astype(np.float32)
    truth = Raster(agb[None], band_names=["agb_mgha"], geotransform=gt)

    # eco-region map: Voronoi cells; with 3 regions a fourth seed emits raw
    # code 4, which downstream merges into EC3
    n_seeds = cfg.n_ecoregions + 1 if cfg.n_ecoregions == 3 else cfg.n_ecoregions
    reg_rng = rng.child(2)
    sy = reg_rng.uniform(n_seeds, 0, n, dtype=np.float64)
    sx = reg_rng.uniform(n_seeds, 0, n, dtype=np.float64)
    yy, xx = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    d2 = (yy[None] - sy[:, None, None]) ** 2 + (xx[None] - sx[:, None, None]) ** 2
    codes = (np.argmin(d2, axis=0) + 1).astype(np.float32)
    ecomap = Raster(codes[None], band_names=["ecoregion_code"], geotransform=gt)

    # scenes
    v = np.clip(agb / cfg.max_agb, 0.0, 1.0)
    base = np.stack([off + slope * v for off, slope in (_BAND_MODEL[b] for b in HLS_BANDS)]).astype(np.float32)
    scenes = []
    for s in range(cfg.n_scenes):
        srng = rng.child(3, s)
        jitter = float(srng.normal((), 0.0, 0.005, dtype=np.float64))
        noise = srng.normal(base.shape, 0.0, cfg.pixel_noise, dtype=np.float32)
        img = base + np.float32(jitter) + noise
        cloudy = _blob_mask(srng.child(1), n, cfg.cloud_fraction)
        missing = _blob_mask(srng.child(2), n, cfg.nodata_fraction)
        bright = srng.normal((n, n), 0.55, 0.02, dtype=np.float32)
        img = np.where(cloudy[None], bright[None], img)
        img = np.where(missing[None], np.float32(truth.nodata), img)
        mask = np.full((n, n), CLEAR, dtype=np.float32)
        mask[cloudy] = CLOUD
        mask[missing] = MASK_NODATA
        scenes.append(
            Scene(
                image=Raster(img, band_names=list(HLS_BANDS), geotransform=gt),
                cloud_mask=Raster(mask[None], band_names=["cloud_code"], geotransform=gt),
                timestamp=dt.date(2022, 6, 1) + dt.timedelta(days=15 * s),
            )
        )

    # sparse measurements: truth sampled at random pixels plus noise
    prng = rng.child(4)
    rows = prng.integers(cfg.n_points, n)
    cols = prng.integers(cfg.n_points, n)
    jit = prng.uniform((cfg.n_points, 2), -0.4, 0.4, dtype=np.float64)
    noise = prng.normal(cfg.n_points, 0.0, cfg.point_noise, dtype=np.float64)
    days = prng.integers(cfg.n_points, 90)
    points = []
    for i in range(cfg.n_points):
        r, c = int(rows[i]), int(cols[i])
        lon, lat = truth.pixel_center(r, c)
        points.append(
            PointMeasurement(
                lon=lon + jit[i, 0] * cfg.pixel_deg,
                lat=lat + jit[i, 1] * cfg.pixel_deg,
                agb=float(max(0.0, agb[r, c] + noise[i])),
                date=dt.date(2022, 6, 1) + dt.timedelta(days=int(days[i])),
                ecoregion=None,
            )
        )
    return SynthWorld(scenes=scenes, points=points, ecomap=ecomap, truth=truth, config=cfg)
