"""Cloud-free median compositing across dated scenes."""

from __future__ import annotations

import datetime as dt

import numpy as np

from .. import kernels
from ..errors import InvalidArgument
from .raster import CLEAR, Raster, Scene


def median_composite(scenes: list[Scene], date_window: tuple[dt.date, dt.date] | None = None) -> Raster:
    """Per pixel and band, the median over observations that are cloud-free
    and not nodata. Even counts average the two middle values; pixels with no
    clear observation in any scene become nodata. Scene order does not matter.

    date_window optionally restricts to scenes with start <= date <= end
    (e.g. a leaf-on season filter).
    """
    if date_window is not None:
        lo, hi = date_window
        scenes = [s for s in scenes if lo <= s.timestamp <= hi]
    if not scenes:
        raise InvalidArgument("median_composite needs at least one scene")
    ref = scenes[0].image
    for s in scenes[1:]:
        if s.image.grid_key() != ref.grid_key() or s.image.band_names != ref.band_names:
            raise InvalidArgument("scenes must share grid, geotransform, and band order")

    S = len(scenes)
    B, H, W = ref.bands, ref.height, ref.width
    vals = np.stack([s.image.data for s in scenes])  # [S, B, H, W]
    clear = np.stack([s.cloud_mask.data[0] == CLEAR for s in scenes])  # [S, H, W]
    valid = clear[:, None, :, :] & (vals != ref.nodata)

    med = kernels.masked_median(vals.reshape(S, B * H * W), valid.reshape(S, B * H * W), ref.nodata)
    return Raster(
        data=med.reshape(B, H, W),
        band_names=list(ref.band_names),
        nodata=ref.nodata,
        geotransform=ref.geotransform,
        epsg=ref.epsg,
    )
