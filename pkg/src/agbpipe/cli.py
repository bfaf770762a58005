"""Single command-line entry point wiring the pipeline end to end.

Subcommands: synth, composite, build-dataset, pretrain, finetune, train-unet,
evaluate, report, grad-check. Exit codes: 0 success, 2 config error, 3 data
error, 4 numeric fault. On failure stderr carries one machine-parsable
`E_CODE: message` line followed by human detail. Every output artifact embeds
the canonical config hash and seed; identical inputs reproduce identical
bytes (wall-time columns aside).
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys
from pathlib import Path

import numpy as np

from . import geodata
from .config import config_hash, load_config
from .errors import (
    AgbError,
    CheckpointError,
    ConfigError,
    DataError,
    EmptyLabelsError,
    EmptySplitError,
    InvalidArgument,
)
from .evaluation import BinSpec, render_svg, report_from_json, stratified_report, write_report
from .models import checkpoint as ckpt
from .models import collect_params, factory, freeze_encoder
from .numcore.rng import Prng
from .training import (
    BaselineConfig,
    FinetuneConfig,
    PretrainConfig,
    predict_tiles,
    train_baseline,
    train_finetune,
    train_pretrain,
)

log = logging.getLogger("agbpipe")

_SEED_MODEL, _SEED_TRAIN = 0x11, 0x22


def _setup_logging(args) -> None:
    level = logging.INFO
    if getattr(args, "quiet", False):
        level = logging.WARNING
    elif getattr(args, "verbose", False):
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load_cfg(args) -> tuple[dict, str]:
    cfg = load_config(getattr(args, "config", None))
    return cfg, config_hash(cfg)


def _date_window(g: dict):
    if g["date_start"] is None and g["date_end"] is None:
        return None
    try:
        lo = dt.date.fromisoformat(g["date_start"]) if g["date_start"] else dt.date.min
        hi = dt.date.fromisoformat(g["date_end"]) if g["date_end"] else dt.date.max
    except ValueError as e:
        raise ConfigError(f"bad date window: {e}") from None
    return (lo, hi)


# --- subcommand handlers ----------------------------------------------------


def cmd_synth(args) -> int:
    cfg, chash = _load_cfg(args)
    g = cfg["geodata"]
    sc = geodata.SynthConfig(
        grid_size=g["grid_size"], n_scenes=g["n_scenes"], cloud_fraction=g["cloud_fraction"],
        nodata_fraction=g["nodata_fraction"], n_points=g["n_points"], n_ecoregions=g["n_ecoregions"],
        bumps=g["bumps"], max_agb=g["max_agb"], agb_gamma=g["agb_gamma"],
        point_noise=g["point_noise"], pixel_noise=g["pixel_noise"],
    )
    world = geodata.synth_generate(sc, cfg["seed"])
    out = Path(args.out)
    geodata.write_scenes(out / "scenes", world.scenes)
    geodata.write_points_csv(out / "points.csv", world.points)
    stamp = {"config_hash": chash, "seed": cfg["seed"]}
    geodata.write_raster(out / "ecomap", world.ecomap, extra_meta=stamp)
    geodata.write_raster(out / "truth_agb", world.truth, extra_meta=stamp)
    log.info("synthetic world in %s: %d scenes, %d points", out, len(world.scenes), len(world.points))
    return 0


def cmd_composite(args) -> int:
    cfg, chash = _load_cfg(args)
    scenes = geodata.read_scenes(args.scenes)
    comp = geodata.median_composite(scenes, date_window=_date_window(cfg["geodata"]))
    geodata.write_raster(args.out, comp, extra_meta={"config_hash": chash, "seed": cfg["seed"]})
    n_nodata = int(np.any(comp.data == comp.nodata, axis=0).sum())
    log.info("composite %s: %dx%d, %d nodata pixels", args.out, comp.height, comp.width, n_nodata)
    return 0


def cmd_build_dataset(args) -> int:
    cfg, chash = _load_cfg(args)
    g = cfg["geodata"]
    comp = geodata.read_raster(args.composite)
    ecomap = geodata.read_raster(args.ecomap)

    if args.unlabeled:
        label = np.full((comp.height, comp.width), comp.nodata, dtype=np.float32)
        valid = np.zeros((comp.height, comp.width), dtype=bool)
    else:
        if not args.points:
            raise ConfigError("build-dataset needs --points unless --unlabeled is given")
        points = geodata.read_points_csv(args.points)
        points, _ = geodata.assign_all(points, ecomap)
        label, valid, pstats = geodata.rasterize_labels(points, comp)
        if pstats["n_inside"] == 0:
            raise EmptyLabelsError(f"no points from {args.points} fall inside the composite grid")

    tiles = geodata.tile_dataset(
        comp, label, valid, ecomap, T=g["tile_size"], stride=g["stride"],
        max_nodata_frac=g["max_nodata_frac"], allow_unlabeled=args.unlabeled,
    )
    if not tiles:
        raise DataError("no tiles survived filtering; relax max_nodata_frac or add labels")

    if args.unlabeled:
        manifest = geodata.DatasetManifest(seed=cfg["seed"])
        for t in tiles:
            manifest.tiles.append(
                geodata.TileEntry(t.tile_id, f"tiles/{t.tile_id}.tile", "finetune", t.ecoregion, 0)
            )
    else:
        manifest = geodata.split_dataset(tiles, g["validation_fraction"], cfg["seed"])

    ft_ids = set(manifest.split_ids("finetune"))
    ft_tiles = [t for t in tiles if t.tile_id in ft_ids]
    mean, std = geodata.band_stats(ft_tiles if ft_tiles else tiles)
    tiles = geodata.normalize_tiles(tiles, mean, std)
    manifest.band_mean = [float(x) for x in mean]
    manifest.band_std = [float(x) for x in std]
    manifest.config_hash = chash
    geodata.save_dataset(args.out, tiles, manifest)
    n_val = len(manifest.split_ids("validation"))
    log.info("dataset %s: %d tiles (%d validation)", args.out, len(tiles), n_val)
    return 0


def _load_dataset(path, split=None):
    manifest = geodata.load_manifest(path)
    return manifest, geodata.load_tiles(path, manifest, split=split)


def _model_cfg_from(cfg: dict, kind: str) -> dict:
    preset = cfg["model"]["preset"]
    over = {}
    if kind == "simmim":
        p = cfg["pretrain"]
        over["simmim"] = {"mask_ratio": p["mask_ratio"], "loss_on": p["loss_on"]}
        if p["mask_patch_size"] is not None:
            over["simmim"]["mask_patch_size"] = p["mask_patch_size"]
    return factory.model_config(kind, preset, **over)


def cmd_pretrain(args) -> int:
    cfg, chash = _load_cfg(args)
    manifest, tiles = _load_dataset(args.data)
    mcfg = _model_cfg_from(cfg, "simmim")
    rng = Prng(cfg["seed"])
    model = factory.build_model(mcfg, rng=rng.child(_SEED_MODEL))
    mp = collect_params(model)
    p = cfg["pretrain"]
    tcfg = PretrainConfig(
        epochs=p["epochs"], max_lr=p["max_lr"], warmup_epochs=p["warmup_epochs"],
        batch_size=p["batch_size"], seed=rng.child(_SEED_TRAIN).seed, grad_clip=p["grad_clip"],
    )
    hist = train_pretrain(model, mp, tiles, tcfg)
    out = Path(args.out)
    ckpt.save_checkpoint(out, out.stem, mcfg, mp, epoch=tcfg.epochs, seed=cfg["seed"], config_hash=chash)
    hist.write_csv(out.with_suffix(".history.csv"))
    hist.write_json(out.with_suffix(".history.json"))
    log.info("pretrained %s: loss %.4f -> %.4f", out, hist.rows[0]["train_loss"], hist.final_train_loss())
    return 0


def cmd_finetune(args) -> int:
    cfg, chash = _load_cfg(args)
    bundle = ckpt.load_checkpoint(args.encoder)
    enc_cfg = bundle["meta"]["model_config"]
    if "swin" not in enc_cfg:
        raise CheckpointError(f"{args.encoder}: checkpoint has no encoder section")
    mcfg = _model_cfg_from(cfg, "gfm")
    if enc_cfg["swin"] != mcfg["swin"]:
        ckpt.check_config_match({"model_config": enc_cfg["swin"]}, mcfg["swin"], str(args.encoder))

    rng = Prng(cfg["seed"])
    model = factory.build_model(mcfg, rng=rng.child(_SEED_MODEL))
    mp = collect_params(model)
    ckpt.restore_params(mp, bundle["params"], prefix="encoder.", path=str(args.encoder))
    freeze_encoder(mp)

    manifest, _ = _load_dataset(args.data)
    ft = geodata.load_tiles(args.data, manifest, split="finetune")
    val = geodata.load_tiles(args.data, manifest, split="validation")
    if not ft:
        raise InvalidArgument("finetune split is empty")
    f = cfg["finetune"]
    tcfg = FinetuneConfig(
        epochs=f["epochs"], max_lr=f["max_lr"], warmup_epochs=f["warmup_epochs"],
        batch_size=f["batch_size"], seed=rng.child(_SEED_TRAIN).seed, grad_clip=f["grad_clip"],
    )
    hist = train_finetune(model, mp, ft, val, tcfg, preset=cfg["model"]["preset"])
    out = Path(args.out)
    ckpt.save_checkpoint(out, out.stem, mcfg, mp, epoch=tcfg.epochs, seed=cfg["seed"], config_hash=chash)
    hist.write_csv(out.with_suffix(".history.csv"))
    hist.write_json(out.with_suffix(".history.json"))
    log.info("finetuned %s: train %.3f, best val %.3f", out, hist.final_train_loss(), hist.best_val())
    return 0


def cmd_train_unet(args) -> int:
    cfg, chash = _load_cfg(args)
    mcfg = _model_cfg_from(cfg, "unet")
    rng = Prng(cfg["seed"])
    model = factory.build_model(mcfg, rng=rng.child(_SEED_MODEL))
    mp = collect_params(model, encoder_prefixes=())  # everything trainable
    manifest, _ = _load_dataset(args.data)
    ft = geodata.load_tiles(args.data, manifest, split="finetune")
    val = geodata.load_tiles(args.data, manifest, split="validation")
    if not ft:
        raise InvalidArgument("finetune split is empty")
    b = cfg["baseline"]
    tcfg = BaselineConfig(
        epochs=b["epochs"], lr=b["lr"], batch_size=b["batch_size"],
        seed=rng.child(_SEED_TRAIN).seed, grad_clip=b["grad_clip"],
    )
    hist = train_baseline(model, mp, ft, val, tcfg)
    out = Path(args.out)
    ckpt.save_checkpoint(out, out.stem, mcfg, mp, epoch=tcfg.epochs, seed=cfg["seed"], config_hash=chash)
    hist.write_csv(out.with_suffix(".history.csv"))
    hist.write_json(out.with_suffix(".history.json"))
    log.info("trained %s: train %.3f, best val %.3f", out, hist.final_train_loss(), hist.best_val())
    return 0


def cmd_evaluate(args) -> int:
    cfg, _ = _load_cfg(args)
    bundle = ckpt.load_checkpoint(args.model)
    model = factory.build_model(bundle["meta"]["model_config"])
    mp = collect_params(model, encoder_prefixes=())
    ckpt.restore_params(mp, bundle["params"], path=str(args.model))

    manifest, _ = _load_dataset(args.data)
    val = geodata.load_tiles(args.data, manifest, split="validation")
    if not val:
        raise EmptySplitError(f"{args.data}: validation split is empty")
    edges = tuple(float(x) for x in args.bins.split(",")) if args.bins else tuple(cfg["eval"]["bins"])
    preds = predict_tiles(model, val, batch=8)
    report = stratified_report(
        preds, val, BinSpec(edges),
        model_id=bundle["meta"]["model_id"], dataset_id=Path(args.data).name,
        seed=bundle["meta"]["seed"], config_hash=bundle["meta"]["config_hash"],
    )
    jpath, cpath = write_report(args.out, report)
    log.info("report %s / %s: overall RMSE %.3f over %d px", jpath, cpath, report.overall.rmse, report.overall.n)
    return 0


def cmd_report(args) -> int:
    paths = [p for p in args.inputs.split(",") if p]
    reports = []
    for p in paths:
        try:
            reports.append(report_from_json(Path(p).read_text()))
        except FileNotFoundError:
            raise DataError(f"report not found: {p}") from None
    render_svg(reports, args.out)
    log.info("figure %s: %d model(s)", args.out, len(reports))
    return 0


def cmd_grad_check(args) -> int:
    from . import checks

    if args.op:
        if args.op not in checks.OP_CASES:
            raise ConfigError(f"unknown op {args.op!r}; have {', '.join(sorted(checks.OP_CASES))}")
        cases = {args.op: checks.OP_CASES[args.op]}
    elif args.model:
        cases = checks.MODEL_CASES
    else:
        cases = checks.OP_CASES
    seeds = range(args.seeds)
    failed = 0
    for name, err, ok in checks.run_cases(cases, seeds=seeds):
        print(f"{'PASS' if ok else 'FAIL'}  {name:<20} max rel err {err:.3e}")
        failed += 0 if ok else 1
    if failed:
        print(f"{failed} case(s) failed", file=sys.stderr)
        return 4
    return 0


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="agbpipe",
        description="Sparse-label biomass regression pipeline (synthetic desk-scale runs).",
        epilog="Config defaults include the published hyperparameters: finetune max_lr 2e-4 "
        "with 10 warmup epochs and cosine decay over 100 epochs; baseline lr 0.01, batch 128, Adam.",
    )
    ap.add_argument("--quiet", action="store_true", help="only warnings and errors")
    ap.add_argument("--verbose", action="store_true", help="debug logging")
    ap.add_argument("--threads", type=int, default=None,
                    help="cap worker threads (the reference path is sequential and deterministic)")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic world: scenes, points, ecomap, truth")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)

    p = add("composite", cmd_composite, "cloud-free median composite from a scene directory")
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)

    p = add("build-dataset", cmd_build_dataset, "rasterize labels, tile, normalize, split")
    p.add_argument("--composite", required=True)
    p.add_argument("--points", default=None)
    p.add_argument("--ecomap", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--unlabeled", action="store_true", help="pretraining corpus: keep tiles without labels")

    p = add("pretrain", cmd_pretrain, "masked-image pretraining of the encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)

    p = add("finetune", cmd_finetune, "frozen-encoder fine-tuning of the regression head")
    p.add_argument("--encoder", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)

    p = add("train-unet", cmd_train_unet, "train the U-Net baseline from scratch")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "bin-wise stratified RMSE on the validation split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--bins", default=None, help="comma-separated edges, default 0,50,100,200,300,400")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="output prefix for .json/.csv")

    p = add("report", cmd_report, "grouped-bar SVG comparing evaluation reports")
    p.add_argument("--inputs", required=True, help="comma-separated report JSON paths")
    p.add_argument("--out", required=True)

    p = add("grad-check", cmd_grad_check, "finite-difference suite (nonzero exit on failure)")
    p.add_argument("--op", default=None)
    p.add_argument("--model", default=None, help="check the model-level cases instead of single ops")
    p.add_argument("--seeds", type=int, default=3)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args)
    try:
        return args.fn(args)
    except AgbError as e:
        print(f"{e.code}: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:  # unexpected
        print(f"E_INTERNAL: {type(e).__name__}: {e}", file=sys.stderr)
        raise


if __name__ == "__main__":
    sys.exit(main())
