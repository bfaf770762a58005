"""Compositing, rasterization, eco-regions, tiling, splits, synth, and IO."""

import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agbpipe.errors import InvalidArgument, ParseError
from agbpipe.geodata import (
    DatasetManifest,
    PointMeasurement,
    Raster,
    Scene,
    SynthConfig,
    assign_ecoregion,
    band_stats,
    load_manifest,
    load_tiles,
    median_composite,
    normalize_tiles,
    rasterize_labels,
    read_points_csv,
    read_raster,
    save_dataset,
    split_dataset,
    synth_generate,
    tile_dataset,
    write_points_csv,
    write_raster,
)
from agbpipe.geodata.raster import CLEAR, CLOUD, NODATA

DATE = dt.date(2022, 6, 1)


def make_scene(values, mask_codes, nodata=NODATA):
    """values: [bands, H, W]; mask_codes: [H, W]."""
    values = np.asarray(values, dtype=np.float32)
    img = Raster(values, nodata=nodata)
    mask = Raster(np.asarray(mask_codes, dtype=np.float32)[None])
    return Scene(image=img, cloud_mask=mask, timestamp=DATE)


def composite_oracle(scenes):
    """Brute-force per-pixel median of clear, non-nodata observations."""
    ref = scenes[0].image
    out = np.full_like(ref.data, ref.nodata)
    for b in range(ref.bands):
        for i in range(ref.height):
            for j in range(ref.width):
                vals = []
                for s in scenes:
                    if s.cloud_mask.data[0, i, j] == CLEAR and s.image.data[b, i, j] != ref.nodata:
                        vals.append(np.float32(s.image.data[b, i, j]))
                if vals:
                    vals.sort()
                    k = len(vals)
                    out[b, i, j] = (vals[(k - 1) // 2] + vals[k // 2]) * np.float32(0.5)
    return out


class TestMedianComposite:
    def test_single_clear_scene_identity(self):
        img = np.random.default_rng(0).uniform(0, 1, (3, 4, 5)).astype(np.float32)
        sc = make_scene(img, np.zeros((4, 5)))
        out = median_composite([sc])
        assert np.array_equal(out.data, img)

    def test_even_count_mean_of_middles(self):
        vals = [3.0, 7.0, 100.0]
        scenes = []
        for i, v in enumerate(vals):
            code = CLOUD if v == 100.0 else CLEAR
            scenes.append(make_scene(np.full((1, 1, 1), v), np.full((1, 1), code)))
        out = median_composite(scenes)
        assert out.data[0, 0, 0] == 5.0

    def test_all_cloudy_pixel_is_nodata(self):
        scenes = [make_scene(np.full((1, 2, 2), 9.0), np.full((2, 2), CLOUD)) for _ in range(3)]
        out = median_composite(scenes)
        assert np.all(out.data == NODATA)

    def test_permutation_invariance_bit_exact(self):
        r = np.random.default_rng(1)
        scenes = [
            make_scene(r.uniform(0, 1, (2, 6, 6)), (r.random((6, 6)) < 0.4).astype(float))
            for _ in range(5)
        ]
        a = median_composite(scenes).data
        b = median_composite(scenes[::-1]).data
        assert np.array_equal(a, b)

    @given(seed=st.integers(0, 500), n=st.integers(1, 7))
    @settings(max_examples=20, deadline=None)
    def test_never_invents_values(self, seed, n):
        r = np.random.default_rng(seed)
        scenes = [
            make_scene(r.uniform(0, 1, (1, 3, 3)), (r.random((3, 3)) < 0.5).astype(float))
            for _ in range(n)
        ]
        out = median_composite(scenes).data[0]
        stack = np.stack([s.image.data[0] for s in scenes])
        clear = np.stack([s.cloud_mask.data[0] == CLEAR for s in scenes])
        for i in range(3):
            for j in range(3):
                obs = stack[clear[:, i, j], i, j]
                if obs.size:
                    assert obs.min() <= out[i, j] <= obs.max()
                else:
                    assert out[i, j] == NODATA

    def test_matches_brute_force_oracle(self):
        r = np.random.default_rng(7)
        for trial in range(20):
            n = int(r.integers(1, 8))
            scenes = []
            for _ in range(n):
                img = r.uniform(0, 1, (2, 5, 4)).astype(np.float32)
                img[tuple(r.integers(0, s, 3) for s in img.shape)] = NODATA
                codes = r.choice([CLEAR, CLOUD, 2], size=(5, 4), p=[0.6, 0.3, 0.1])
                scenes.append(make_scene(img, codes))
            assert np.array_equal(median_composite(scenes).data, composite_oracle(scenes))

    def test_mismatched_grids_rejected(self):
        a = make_scene(np.ones((1, 2, 2)), np.zeros((2, 2)))
        b = make_scene(np.ones((1, 3, 3)), np.zeros((3, 3)))
        with pytest.raises(InvalidArgument):
            median_composite([a, b])

    def test_empty_scene_list_rejected(self):
        with pytest.raises(InvalidArgument):
            median_composite([])


def grid_raster(n=8, origin=(-50.0, -10.0), px=0.01):
    return Raster(np.zeros((1, n, n), dtype=np.float32), geotransform=(origin[0], origin[1], px, -px))


class TestRasterizeLabels:
    def test_single_point_at_center(self):
        g = grid_raster()
        lon, lat = g.pixel_center(2, 3)
        label, valid, stats = rasterize_labels([PointMeasurement(lon, lat, 120.0, DATE)], g)
        assert valid[2, 3] and label[2, 3] == 120.0
        assert valid.sum() == 1 and stats["n_inside"] == 1

    def test_two_points_same_pixel_mean(self):
        g = grid_raster()
        lon, lat = g.pixel_center(1, 1)
        pts = [PointMeasurement(lon, lat, 100.0, DATE), PointMeasurement(lon, lat, 200.0, DATE)]
        label, valid, _ = rasterize_labels(pts, g)
        assert label[1, 1] == 150.0

    def test_against_binning_oracle_and_conservation(self):
        g = grid_raster(n=64, px=0.001)
        r = np.random.default_rng(3)
        pts = []
        for _ in range(1000):
            lon = -50.0 + r.uniform(-0.005, 0.07)  # some fall outside
            lat = -10.0 - r.uniform(-0.005, 0.07)
            pts.append(PointMeasurement(lon, lat, float(r.uniform(0, 400)), DATE))
        label, valid, stats = rasterize_labels(pts, g)

        sums = {}
        counts = {}
        inside_total = 0.0
        for p in pts:
            loc = g.world_to_pixel(p.lon, p.lat)
            if loc is None:
                continue
            sums[loc] = sums.get(loc, 0.0) + p.agb
            counts[loc] = counts.get(loc, 0) + 1
            inside_total += p.agb
        for loc, sm in sums.items():
            assert label[loc] == pytest.approx(sm / counts[loc], rel=1e-6)
        assert valid.sum() == len(sums)
        assert stats["n_outside"] == len(pts) - sum(counts.values())
        # conservation: sum(mean * count) == sum of in-grid agb
        recon = sum(float(label[loc]) * c for loc, c in counts.items())
        assert recon == pytest.approx(inside_total, rel=1e-6)

    def test_no_points_inside_flagged(self):
        g = grid_raster()
        _, valid, stats = rasterize_labels([PointMeasurement(100.0, 80.0, 5.0, DATE)], g)
        assert stats["n_inside"] == 0 and valid.sum() == 0


class TestEcoregion:
    def make_map(self):
        codes = np.zeros((1, 4, 4), dtype=np.float32)
        codes[0, :2] = 1.0
        codes[0, 2] = 2.0
        codes[0, 3] = 4.0
        return Raster(codes, geotransform=(0.0, 0.0, 1.0, -1.0))

    def test_code_1_maps_to_ec1(self):
        m = self.make_map()
        lon, lat = m.pixel_center(0, 0)
        assert assign_ecoregion(PointMeasurement(lon, lat, 1.0, DATE), m) == "EC1"

    def test_code_4_merges_into_ec3(self):
        m = self.make_map()
        lon, lat = m.pixel_center(3, 0)
        assert assign_ecoregion(PointMeasurement(lon, lat, 1.0, DATE), m) == "EC3"

    def test_outside_map_unassigned(self):
        m = self.make_map()
        assert assign_ecoregion(PointMeasurement(4.5, -0.5, 1.0, DATE), m) is None


def make_world(n=256, seed=11, **kw):
    return synth_generate(SynthConfig(grid_size=n, **kw), seed)


class TestTiling:
    def composite_of(self, world):
        return median_composite(world.scenes)

    def test_fully_valid_composite_single_tile(self):
        comp = Raster(np.random.default_rng(0).uniform(0, 1, (6, 64, 64)).astype(np.float32))
        label = np.full((64, 64), NODATA, dtype=np.float32)
        valid = np.zeros((64, 64), dtype=bool)
        valid[10, 10] = True
        label[10, 10] = 50.0
        eco = Raster(np.ones((1, 64, 64), dtype=np.float32))
        tiles = tile_dataset(comp, label, valid, eco, T=64, stride=64)
        assert len(tiles) == 1
        assert tiles[0].ecoregion == "EC1"

    def test_unlabeled_tiles_dropped(self):
        comp = Raster(np.ones((6, 64, 128), dtype=np.float32))
        label = np.full((64, 128), NODATA, dtype=np.float32)
        valid = np.zeros((64, 128), dtype=bool)
        valid[5, 5] = True  # only the left window has a label
        label[5, 5] = 10.0
        eco = Raster(np.ones((1, 64, 128), dtype=np.float32))
        tiles = tile_dataset(comp, label, valid, eco, T=64, stride=64)
        assert [t.origin_rc for t in tiles] == [(0, 0)]

    def test_count_matches_window_scan_oracle(self):
        world = make_world(n=256, seed=5, cloud_fraction=0.5, nodata_fraction=0.1)
        comp = self.composite_of(world)
        label, valid, _ = rasterize_labels(world.points, comp)
        T, stride, thr = 64, 64, 0.5
        tiles = tile_dataset(comp, label, valid, world.ecomap, T=T, stride=stride, max_nodata_frac=thr)

        nodata_px = np.any(comp.data == comp.nodata, axis=0)
        codes = np.rint(world.ecomap.data[0]).astype(int)
        expected = 0
        for r0 in range(0, comp.height - T + 1, stride):
            for c0 in range(0, comp.width - T + 1, stride):
                win = (slice(r0, r0 + T), slice(c0, c0 + T))
                if nodata_px[win].mean() > thr:
                    continue
                if not valid[win].any():
                    continue
                c = codes[win]
                if not ((c >= 1) & (c <= 4)).any():
                    continue
                expected += 1
        assert len(tiles) == expected

    def test_tile_size_constraints(self):
        comp = Raster(np.ones((6, 64, 64), dtype=np.float32))
        eco = Raster(np.ones((1, 64, 64), dtype=np.float32))
        z = np.zeros((64, 64))
        with pytest.raises(InvalidArgument):
            tile_dataset(comp, z, z.astype(bool), eco, T=48, stride=16)  # not /32
        with pytest.raises(InvalidArgument):
            tile_dataset(comp, z, z.astype(bool), eco, T=128, stride=64)  # larger than raster

    def test_nodata_pixels_mean_filled(self):
        comp = Raster(np.ones((6, 64, 64), dtype=np.float32))
        comp.data[:, 0, 0] = NODATA
        comp.data[2, 10, 10] = 4.0
        label = np.zeros((64, 64), dtype=np.float32)
        valid = np.ones((64, 64), dtype=bool)
        eco = Raster(np.ones((1, 64, 64), dtype=np.float32))
        tiles = tile_dataset(comp, label, valid, eco, T=64, stride=64, max_nodata_frac=0.5)
        t = tiles[0]
        assert not np.any(t.image == NODATA)
        ok = comp.data[2] != NODATA
        assert t.image[2, 0, 0] == pytest.approx(comp.data[2][ok].mean())


class TestNormalizeAndSplit:
    def make_tiles(self, n, region_of=lambda i: "EC1", seed=0):
        r = np.random.default_rng(seed)
        from agbpipe.geodata.tiles import LabeledTile

        tiles = []
        for i in range(n):
            valid = np.zeros((32, 32), dtype=bool)
            valid[0, 0] = True
            label = np.where(valid, 50.0, NODATA).astype(np.float32)
            tiles.append(
                LabeledTile(
                    tile_id=f"t{i:03d}",
                    image=r.uniform(0, 1, (6, 32, 32)).astype(np.float32),
                    label=label,
                    valid=valid,
                    ecoregion=region_of(i),
                )
            )
        return tiles

    def test_constant_band_normalizes_to_zero(self):
        tiles = self.make_tiles(3)
        for t in tiles:
            t.image[2] = 7.0
        mean, std = band_stats(tiles)
        assert std[2] == 1.0
        out = normalize_tiles(tiles, mean, std)
        assert np.all(out[0].image[2] == 0.0)

    def test_identity_stats(self):
        tiles = self.make_tiles(2)
        out = normalize_tiles(tiles, np.zeros(6), np.ones(6))
        assert np.array_equal(out[0].image, tiles[0].image)

    def test_post_normalization_moments(self):
        tiles = self.make_tiles(5, seed=3)
        mean, std = band_stats(tiles)
        out = normalize_tiles(tiles, mean, std)
        stack = np.stack([t.image for t in out]).astype(np.float64)
        assert np.abs(stack.mean(axis=(0, 2, 3))).max() < 1e-5
        assert np.abs(stack.std(axis=(0, 2, 3)) - 1.0).max() < 1e-5

    def test_split_ten_tiles_fraction(self):
        tiles = self.make_tiles(10)
        m = split_dataset(tiles, 0.2, seed=1)
        assert len(m.split_ids("validation")) == 2
        assert len(m.split_ids("finetune")) == 8

    def test_split_deterministic(self):
        tiles = self.make_tiles(30, region_of=lambda i: f"EC{i % 3 + 1}")
        a = split_dataset(tiles, 0.25, seed=7).to_dict()
        b = split_dataset(tiles, 0.25, seed=7).to_dict()
        assert a == b

    def test_split_stratified_counts_match_oracle(self):
        sizes = {"EC1": 40, "EC2": 35, "EC3": 25}
        order = [r for r, n in sizes.items() for _ in range(n)]
        tiles = self.make_tiles(100, region_of=lambda i: order[i])
        m = split_dataset(tiles, 0.3, seed=2)
        for region, n in sizes.items():
            expected_val = int(np.floor(0.3 * n + 0.5))
            got = sum(1 for t in m.tiles if t.ecoregion == region and t.split == "validation")
            assert got == expected_val

    def test_tiny_region_all_finetune(self):
        tiles = self.make_tiles(5, region_of=lambda i: "EC2" if i == 0 else "EC1")
        m = split_dataset(tiles, 0.4, seed=3)
        ec2 = [t for t in m.tiles if t.ecoregion == "EC2"]
        assert all(t.split == "finetune" for t in ec2)

    def test_bad_fraction_rejected(self):
        with pytest.raises(InvalidArgument):
            split_dataset(self.make_tiles(4), 1.5, seed=0)

    def test_dataset_round_trip(self, tmp_path):
        tiles = self.make_tiles(6, region_of=lambda i: f"EC{i % 2 + 1}", seed=5)
        manifest = split_dataset(tiles, 0.34, seed=9)
        mean, std = band_stats(tiles)
        tiles = normalize_tiles(tiles, mean, std)
        manifest.band_mean = [float(x) for x in mean]
        manifest.band_std = [float(x) for x in std]
        save_dataset(tmp_path, tiles, manifest)
        m2 = load_manifest(tmp_path)
        assert m2.to_dict() == manifest.to_dict()
        back = load_tiles(tmp_path, m2)
        assert len(back) == 6
        assert np.array_equal(back[0].image, tiles[0].image)
        assert np.array_equal(back[0].valid, tiles[0].valid)


class TestSynth:
    def test_point_histogram_right_skewed(self):
        world = make_world(n=192, seed=2022, n_points=1500)
        agb = np.array([p.agb for p in world.points])
        assert (agb < 200.0).mean() >= 0.6
        assert agb.min() >= 0.0

    def test_cloud_free_composite_equals_plain_median(self):
        world = make_world(n=64, seed=4, cloud_fraction=0.0, nodata_fraction=0.0, n_scenes=5, n_points=10)
        comp = median_composite(world.scenes)
        stack = np.stack([s.image.data for s in world.scenes])
        assert np.allclose(comp.data, np.median(stack, axis=0), atol=1e-6)

    def test_zero_points_empty_labels_signal(self):
        world = make_world(n=64, seed=4, n_points=0)
        comp = median_composite(world.scenes)
        _, valid, stats = rasterize_labels(world.points, comp)
        assert stats["n_inside"] == 0 and valid.sum() == 0

    def test_determinism(self):
        a = make_world(n=64, seed=8, n_points=50)
        b = make_world(n=64, seed=8, n_points=50)
        assert np.array_equal(a.truth.data, b.truth.data)
        assert np.array_equal(a.scenes[1].image.data, b.scenes[1].image.data)
        assert a.points[17].agb == b.points[17].agb


class TestIO:
    def test_raster_round_trip_bit_exact(self, tmp_path):
        r = Raster(
            np.random.default_rng(0).standard_normal((3, 5, 7)).astype(np.float32),
            band_names=["a", "b", "c"],
            geotransform=(-60.0, -5.0, 0.001, -0.001),
            epsg=4326,
        )
        write_raster(tmp_path / "x", r)
        back = read_raster(tmp_path / "x")
        assert np.array_equal(back.data, r.data)
        assert back.band_names == r.band_names
        assert back.geotransform == r.geotransform

    def test_csv_row_parse(self, tmp_path):
        p = tmp_path / "pts.csv"
        p.write_text("lon,lat,agb_mgha,date,ecoregion\n-55.1,-12.3,142.5,2022-06-01,1\n")
        pts = read_points_csv(p)
        assert len(pts) == 1
        pt = pts[0]
        assert (pt.lon, pt.lat, pt.agb, pt.ecoregion) == (-55.1, -12.3, 142.5, "EC1")

    def test_negative_agb_rejected_with_line(self, tmp_path):
        p = tmp_path / "pts.csv"
        p.write_text("lon,lat,agb_mgha,date,ecoregion\n1.0,2.0,50.0,2022-06-01,\n1.0,2.0,-4.0,2022-06-01,\n")
        with pytest.raises(ParseError, match="line 3"):
            read_points_csv(p)

    def test_points_round_trip(self, tmp_path):
        pts = [PointMeasurement(-55.123456, -12.3, 142.5, DATE, "EC2")]
        write_points_csv(tmp_path / "p.csv", pts)
        back = read_points_csv(tmp_path / "p.csv")
        assert back[0] == pts[0]

    def test_manifest_duplicate_tile_rejected(self):
        doc = {
            "seed": 1,
            "tiles": [
                {"tile_id": "a", "path": "tiles/a.tile", "split": "finetune", "ecoregion": "EC1", "n_valid": 1},
                {"tile_id": "a", "path": "tiles/a.tile", "split": "validation", "ecoregion": "EC1", "n_valid": 1},
            ],
        }
        from agbpipe.errors import DataError

        with pytest.raises(DataError):
            DatasetManifest.from_dict(doc)
