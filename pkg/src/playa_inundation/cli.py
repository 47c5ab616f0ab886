"""Command-line entry point: ``playa <subcommand> [options]``."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__, pipeline
from .checkpoint import load_checkpoint
from .config import load_config

log = logging.getLogger("playa_inundation")


def _common(p: argparse.ArgumentParser, cutoff: bool = False, checkpoint: bool = False) -> None:
    p.add_argument("--config", help="run config JSON (paths resolve relative to it)")
    p.add_argument("--seed", type=int, help="override the global seed")
    p.add_argument("--max-playas", type=int, help="use only the first N playas (sorted by id)")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    if cutoff:
        p.add_argument("--cutoff", type=float, help="probability cutoff for a positive prediction")
        p.add_argument("--select-cutoff", action="store_true", help="choose the cutoff maximizing validation F1")
    if checkpoint:
        p.add_argument("--checkpoint", help="checkpoint path (default: <output_dir>/checkpoint.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="playa", description="Monthly playa inundation modeling.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("extract-lulc", help="Monte-Carlo land-cover fractions around playa centers -> lulc.csv"))
    _common(sub.add_parser("prepare", help="ingest, standardize and report the year split"))

    p = sub.add_parser("synth", help="write a synthetic dataset and run config")
    p.add_argument("--out", required=True)
    p.add_argument("--n-playas", type=int, default=50)
    p.add_argument("--n-years", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--rasters", action="store_true", help="also write yearly land-cover rasters")

    p = sub.add_parser("train", help="fit the model -> checkpoint.json, history.csv")
    _common(p)
    p.add_argument("--max-epochs", type=int, help="override train.max_epochs")

    _common(sub.add_parser("evaluate", help="metrics, ROC, per-playa and regional tables"), cutoff=True, checkpoint=True)
    _common(sub.add_parser("predict", help="per playa-month probabilities -> predictions.csv"), checkpoint=True)
    _common(sub.add_parser("report", help="evaluation tables, predictions and SVG figures"), cutoff=True, checkpoint=True)
    return parser


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.set_seed(args.seed)
    if args.max_playas is not None:
        cfg.max_playas = args.max_playas
    if getattr(args, "max_epochs", None) is not None:
        cfg.train.max_epochs = args.max_epochs
    if getattr(args, "cutoff", None) is not None:
        cfg.cutoff = args.cutoff
    return cfg


def _checkpoint(args, cfg):
    path = args.checkpoint or str(Path(cfg.output_dir) / "checkpoint.json")
    return load_checkpoint(path)


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "synth":
            cfg = pipeline.synth(args.out, args.n_playas, args.n_years, args.seed, args.rasters)
            print(f"wrote synthetic dataset to {args.out}")
            return 0
        cfg = _config(args)
        if args.command == "extract-lulc":
            print(pipeline.extract(cfg, args.out))
        elif args.command == "prepare":
            print(json.dumps(pipeline.prepare(cfg, args.out)["splits"], indent=2))
        elif args.command == "train":
            ckpt = pipeline.train(cfg, args.out)
            print(f"best epoch {ckpt.best_epoch}")
        elif args.command == "evaluate":
            doc = pipeline.evaluate(cfg, _checkpoint(args, cfg), args.out, args.cutoff, args.select_cutoff)
            _summary(doc)
        elif args.command == "predict":
            print(pipeline.predict(cfg, _checkpoint(args, cfg), args.out))
        elif args.command == "report":
            doc = pipeline.report(cfg, _checkpoint(args, cfg), args.out, args.cutoff, args.select_cutoff)
            _summary(doc)
    except (ValueError, OSError, KeyError, FloatingPointError, IndexError) as exc:
        print(f"playa {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def _summary(doc: dict) -> None:
    print(f"cutoff {doc['cutoff']}")
    for name in ("validation", "test"):
        if name in doc:
            m = doc[name]
            cells = [f"{k}={m[k]:.3f}" if m[k] is not None else f"{k}=n/a" for k in ("accuracy", "bce_loss", "auc", "precision", "recall", "f1")]
            print(f"{name:<10} " + " ".join(cells))


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
