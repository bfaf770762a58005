"""Raster/point ingestion, compositing, tiling, splits, and synthetic worlds."""

from .raster import NODATA, Raster, Scene, read_raster, write_raster, read_scenes, write_scenes
from .composite import median_composite
from .points import PointMeasurement, read_points_csv, write_points_csv, assign_ecoregion, assign_all, rasterize_labels
from .tiles import LabeledTile, DatasetManifest, TileEntry, tile_dataset, band_stats, normalize_tiles, split_dataset, save_dataset, load_manifest, load_tiles
from .synth import SynthConfig, SynthWorld, synth_generate

__all__ = [
    "NODATA", "Raster", "Scene", "read_raster", "write_raster", "read_scenes", "write_scenes",
    "median_composite",
    "PointMeasurement", "read_points_csv", "write_points_csv", "assign_ecoregion", "assign_all", "rasterize_labels",
    "LabeledTile", "DatasetManifest", "TileEntry", "tile_dataset", "band_stats", "normalize_tiles",
    "split_dataset", "save_dataset", "load_manifest", "load_tiles",
    "SynthConfig", "SynthWorld", "synth_generate",
]
