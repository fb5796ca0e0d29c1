"""
Command line entry point: `sitswin <command> [options]`.

Exit codes: 0 success, 1 a verify suite failed, 2 usage, configuration or
I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sitswin.cli.verify import SUITES, run_suites
from sitswin.config import PRESETS, RunConfig, load_config, preset
from sitswin.data.dataset import Dataset
from sitswin.data.synth import synth_dataset
from sitswin.data.tile import SitsTile, batch_tiles, load_tile, temporal_resample
from sitswin.decoder.model import SegmentationModel
from sitswin.errors import ConfigError, DimensionError, ParameterError, SitsError
from sitswin.metrics.evaluate import evaluate
from sitswin.metrics.report import format_report
from sitswin.render.images import grid_shape, render_class_map, render_diff, stitch, write_ppm
from sitswin.render.palette import Palette
from sitswin.train.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from sitswin.train.fit import fit

logger = logging.getLogger("sitswin")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

LOG_FILE = "train.log"
CONFIG_FILE = "config.txt"
FINAL_CHECKPOINT = "final.ckpt"
BEST_CHECKPOINT = "best.ckpt"


class UsageError(Exception):
    """Flag combination argparse cannot express."""


def _fail(message: str) -> int:
    print(f"sitswin: error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _check_tiles(tiles: Sequence[SitsTile], config: RunConfig, where: str) -> None:
    cfg = config.model
    for tile in tiles:
        if tile.bands != cfg.in_channels:
            raise DimensionError(f"{where}: tile has {tile.bands} bands, model expects {cfg.in_channels}")
        if (tile.height, tile.width) != (cfg.height, cfg.width):
            raise DimensionError(f"{where}: tile is {tile.height}x{tile.width}, model expects {cfg.height}x{cfg.width}")
        if tile.num_classes != cfg.num_classes:
            raise DimensionError(f"{where}: tile declares {tile.num_classes} classes, model has {cfg.num_classes}")


def _palette(dataset: Optional[Dataset], num_classes: int) -> Palette:
    if dataset is not None and dataset.index.classes:
        return Palette.from_classes(dataset.index.classes)
    return Palette.default(num_classes)


# ---- Commands ----

def cmd_synth(args: argparse.Namespace) -> int:
    index = synth_dataset(
        args.out,
        num_tiles=args.tiles,
        num_classes=args.classes,
        time_steps=args.timesteps,
        bands=args.bands,
        height=args.height,
        width=args.width,
        seed=args.seed,
        val_fraction=args.val_fraction,
        test_fraction=args.test_fraction,
    )
    counts = index.counts()
    print(f"wrote {len(index.entries)} tiles to {args.out}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_config(args: argparse.Namespace) -> int:
    text = f"preset = {args.preset}\n" + preset(args.preset).to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    data_dir = args.data or config.data_dir
    out_dir = args.out or config.out_dir
    if not data_dir:
        raise ConfigError("train: no data directory given (--data or data_dir in the config)", key="data_dir")
    if not out_dir:
        raise ConfigError("train: no output directory given (--out or out_dir in the config)", key="out_dir")
    sys.stdout.write(config.to_text())

    dataset = Dataset.open(data_dir, config.model.time_steps)
    if dataset.index.num_classes != config.model.num_classes:
        raise ConfigError(
            f"train: {data_dir} has {dataset.index.num_classes} classes, config has num_classes = {config.model.num_classes}",
            key="num_classes",
        )
    train_tiles = dataset.split("train")
    val_tiles = dataset.split("val") if dataset.has_split("val") else None
    _check_tiles(train_tiles + (val_tiles or []), config, "train")

    resume = load_checkpoint(args.resume) if args.resume else None
    if resume is not None and resume.config.model != config.model:
        raise ConfigError(f"train: checkpoint {args.resume} was trained with a different model configuration", key="resume")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(config.to_text(), encoding="utf-8")
    model = SegmentationModel(config.model, config.train.seed)
    log_path = out / LOG_FILE
    with log_path.open("a" if resume is not None else "w", encoding="utf-8") as log:
        result = fit(
            model,
            train_tiles,
            config.train,
            val_tiles=val_tiles,
            run_config=config,
            resume=resume,
            stop_epoch=args.stop_epoch,
            max_steps=args.max_steps,
            threads=args.threads,
            on_epoch=lambda record: (log.write(record.line() + "\n"), log.flush()),
        )
        for line in result.log_lines()[len(result.records):]:
            log.write(line + "\n")

    save_checkpoint(result.final, out / FINAL_CHECKPOINT)
    if result.best is not None:
        save_checkpoint(result.best, out / BEST_CHECKPOINT)
    print(f"final train_oa={result.train_oa:.4f}; checkpoints in {out}")
    return EXIT_OK


def _load_model(path: str) -> Tuple[Checkpoint, SegmentationModel]:
    ckpt = load_checkpoint(path)
    return ckpt, ckpt.build_model()


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt, model = _load_model(args.checkpoint)
    dataset = Dataset.open(args.data, ckpt.config.model.time_steps)
    if dataset.index.num_classes != ckpt.config.model.num_classes:
        raise ConfigError(f"eval: {args.data} has {dataset.index.num_classes} classes, checkpoint has {ckpt.config.model.num_classes}", key="num_classes")
    columns = []
    for split in args.split or ["val"]:
        tiles = dataset.split(split)
        _check_tiles(tiles, ckpt.config, "eval")
        columns.append((split, evaluate(model, tiles, args.threads, ckpt.config.train.ignore_id)))
    report = format_report(columns, [c.name for c in dataset.index.classes])
    if args.report:
        Path(args.report).write_text(report, encoding="utf-8")
    sys.stdout.write(report)
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    if args.diff and not args.actual:
        raise UsageError("predict: --diff requires --actual")
    ckpt, model = _load_model(args.checkpoint)
    cfg = ckpt.config.model
    tile = load_tile(args.tile)
    if tile.bands != cfg.in_channels:
        raise DimensionError(f"predict: {args.tile} has {tile.bands} bands, checkpoint expects {cfg.in_channels}")
    tile = temporal_resample(tile, cfg.time_steps)
    _check_tiles([tile], ckpt.config, "predict")

    dataset = Dataset.open(args.classes) if args.classes else None
    palette = _palette(dataset, cfg.num_classes)
    values, _ = batch_tiles([tile])
    pred = model.predict(values)[0]
    write_ppm(args.out, render_class_map(pred, palette))
    if args.actual:
        write_ppm(args.actual, render_class_map(tile.labels, palette))
    if args.diff:
        diff = render_diff(pred, tile.labels, ckpt.config.train.ignore_id)
        write_ppm(args.diff, diff)
        print(f"{int(diff[..., 0].astype(bool).sum())} disagreeing pixels")
    return EXIT_OK


def cmd_mosaic(args: argparse.Namespace) -> int:
    ckpt, model = _load_model(args.checkpoint)
    cfg = ckpt.config.model
    dataset = Dataset.open(args.data, cfg.time_steps)
    tiles = dataset.split(args.split)
    _check_tiles(tiles, ckpt.config, "mosaic")
    palette = _palette(dataset, cfg.num_classes)

    if args.threads < 1:
        raise ParameterError(f"mosaic: threads must be >= 1, got {args.threads}")
    model.eval()
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        preds: List[np.ndarray] = list(pool.map(lambda tile: model.predict(batch_tiles([tile])[0])[0], tiles))
    rows, cols = grid_shape(len(tiles))
    blank = np.zeros((cfg.height, cfg.width, 3), dtype=np.uint8)
    padding = [blank] * (rows * cols - len(tiles))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images = {
        "pred.ppm": [render_class_map(p, palette) for p in preds],
        "actual.ppm": [render_class_map(t.labels, palette) for t in tiles],
        "diff.ppm": [render_diff(p, t.labels, ckpt.config.train.ignore_id) for p, t in zip(preds, tiles)],
    }
    for name, parts in images.items():
        write_ppm(out / name, stitch(parts + padding, rows, cols))
    print(f"{len(tiles)} tiles of split '{args.split}' on a {rows}x{cols} grid written to {out}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = run_suites(names)
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "synth": cmd_synth,
    "config": cmd_config,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "mosaic": cmd_mosaic,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sitswin", description="Swin UNETR crop segmentation of satellite image time series.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--tiles", type=int, default=10)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--bands", type=int, default=4)
    p.add_argument("--timesteps", type=int, default=16)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--width", type=int, default=48)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--test-fraction", type=float, default=0.2)

    p = sub.add_parser("config", help="print a preset as a config file")
    p.add_argument("--preset", default="munich-like", choices=sorted(PRESETS))
    p.add_argument("--out")

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="run config file (defaults to the munich-like preset)")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="output directory for the log and checkpoints")
    p.add_argument("--resume", help="checkpoint to continue from (epoch boundary)")
    p.add_argument("--stop-epoch", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--threads", type=int, default=1, help="threads for validation")

    p = sub.add_parser("eval", help="write the per-class evaluation report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", action="append", help="split to report; repeat for side-by-side columns (default: val)")
    p.add_argument("--report", help="also write the report to this file")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("predict", help="render the prediction for one tile")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tile", required=True)
    p.add_argument("--out", required=True, help="prediction image (PPM)")
    p.add_argument("--actual", help="ground-truth image (PPM)")
    p.add_argument("--diff", help="disagreement image (PPM); needs --actual")
    p.add_argument("--classes", help="dataset directory whose classes.txt supplies the colours")

    p = sub.add_parser("mosaic", help="stitch predictions of a whole split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--suite", default="all", choices=sorted(SUITES) + ["all"])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logger.debug("running %s with %s", args.command, vars(args))
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(str(exc))
    except (SitsError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
