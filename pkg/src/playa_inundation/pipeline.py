"""End-to-end steps behind the CLI subcommands.

Each step reads a :class:`RunConfig`, writes its artifacts plus the resolved
config into an output directory, and never modifies its inputs.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import data, metrics, plots
from .checkpoint import Checkpoint, save_checkpoint
from .config import RunConfig
from .data import DataError, Dataset, standardize_dataset
from .model import SPLIT_NAMES, TEST, VALIDATION, ModelConfig, SequenceSample, predict_logits
from .numeric import sigmoid
from .optim import fit
from .raster import RasterGrid, extract_lulc, read_grid, write_grid

log = logging.getLogger(__name__)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _outdir(cfg: RunConfig, out: Optional[str]) -> Path:
    if out:
        # the resolved config written alongside the artifacts names where they went
        cfg.output_dir = str(Path(out).resolve())
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_dataset(cfg: RunConfig) -> Dataset:
    return data.ingest_dataset(cfg.playas, cfg.monthly, cfg.lulc, cfg.split, cfg.schema, cfg.max_playas)


def model_config_for(cfg: RunConfig, dataset: Dataset) -> ModelConfig:
    return ModelConfig(
        hidden_size=int(cfg.model["hidden_size"]),
        numeric_feature_count=len(dataset.schema),
        embed_dims=dict(cfg.model["embed_dims"]),
        vocab_sizes=dataset.vocab.sizes,
    )


def prepare(cfg: RunConfig, out: Optional[str] = None) -> dict:
    outdir = _outdir(cfg, out)
    ds = load_dataset(cfg)
    stats = data.fit_standardizer(ds)
    report = data.split_report(ds)
    write_json(outdir / "split_report.json", report)
    write_json(outdir / "standardizer.json", stats.to_dict())
    cfg.write(outdir)
    return report


def train(cfg: RunConfig, out: Optional[str] = None) -> Checkpoint:
    outdir = _outdir(cfg, out)
    ds = load_dataset(cfg)
    stats = data.fit_standardizer(ds)
    sds = standardize_dataset(ds, stats)
    mc = model_config_for(cfg, ds)
    params, history = fit(sds.samples, mc, cfg.train)
    ckpt = Checkpoint(mc, ds.vocab, stats, ds.schema, ds.split, params, history.best_epoch, cfg.seed)
    save_checkpoint(ckpt, outdir / "checkpoint.json")
    (outdir / "history.csv").write_text(history.to_csv(), encoding="utf-8")
    cfg.write(outdir)
    log.info("trained %d epochs, best epoch %d", len(history.records), history.best_epoch)
    return ckpt


def align_to_checkpoint(ds: Dataset, ckpt: Checkpoint) -> List[SequenceSample]:
    """Standardize with the checkpoint's stats and re-index against its vocab."""
    if ds.schema.names != ckpt.schema.names:
        raise DataError("input feature schema differs from the checkpoint's")
    out = []
    inverse = {
        "huc8": {v: k for k, v in ds.vocab.huc8.items()},
        "author": {v: k for k, v in ds.vocab.author.items()},
    }
    for s in ds.samples:
        try:
            p = ckpt.vocab.playa[s.playa_id]
            h = ckpt.vocab.huc8[inverse["huc8"][s.huc8_index]]
            a = ckpt.vocab.author[inverse["author"][s.author_index]]
        except KeyError as exc:
            raise DataError(f"playa {s.playa_id!r}: category {exc.args[0]!r} is not in the checkpoint vocabulary") from None
        out.append(
            SequenceSample(s.playa_id, p, h, a, data.apply_standardizer(ckpt.standardizer, s.features), s.labels, s.split, s.months)
        )
    return out


def score(cfg: RunConfig, ckpt: Checkpoint):
    ds = load_dataset(cfg)
    samples = align_to_checkpoint(ds, ckpt)
    logits = predict_logits(samples, ckpt.params)
    return samples, logits, sigmoid(logits)


def _split_arrays(samples, values, code):
    cols = samples[0].split == code
    labels = np.stack([s.labels for s in samples])[:, cols]
    return labels, values[:, cols], cols


def evaluate(cfg: RunConfig, ckpt: Checkpoint, out: Optional[str] = None, cutoff: Optional[float] = None, select: bool = False) -> dict:
    """Write metrics.json plus ROC, per-playa and regional-fraction tables."""
    outdir = _outdir(cfg, out)
    samples, logits, probs = score(cfg, ckpt)
    return write_evaluation(outdir, cfg, samples, logits, probs, cutoff, select)


def write_evaluation(outdir: Path, cfg: RunConfig, samples, logits, probs, cutoff=None, select=False) -> dict:
    if select:
        val_labels, val_probs, _ = _split_arrays(samples, probs, VALIDATION)
        cutoff = metrics.select_cutoff(val_probs, val_labels)
    elif cutoff is None:
        cutoff = cfg.cutoff
    doc = {"cutoff": float(cutoff), "cutoff_selected_on_validation": bool(select)}
    months = samples[0].months
    for code, name in enumerate(SPLIT_NAMES):
        labels, p, cols = _split_arrays(samples, probs, code)
        if not cols.any():
            continue
        _, lg, _ = _split_arrays(samples, logits, code)
        report = metrics.evaluate_split(p, labels, cutoff, name, logits=lg)
        doc[name] = report.to_dict()
        if report.auc is not None:
            fpr, tpr, thr = metrics.roc_curve(p, labels)
            write_csv(outdir / f"roc_{name}.csv", ["fpr", "tpr", "threshold"], zip(fpr, tpr, thr))
        rows = metrics.per_entity_metrics(samples, probs, cutoff, code)
        write_csv(outdir / f"per_playa_{name}.csv", ["playa_id", "loss", "f1"], ((r.playa_id, r.bce_loss, r.f1) for r in rows))
        truth = metrics.regional_fraction(labels, cutoff)
        pred = metrics.regional_fraction(p, cutoff)
        ym = months[cols]
        write_csv(
            outdir / f"fraction_{name}.csv",
            ["year", "month", "truth_fraction", "predicted_fraction"],
            zip(ym[:, 0], ym[:, 1], truth, pred),
        )
    write_json(outdir / "metrics.json", doc)
    cfg.write(outdir)
    return doc


def write_predictions(outdir: Path, samples, probs) -> Path:
    path = outdir / "predictions.csv"

    def rows():
        for s, p in zip(samples, probs):
            for t in range(len(p)):
                yield s.playa_id, int(s.months[t, 0]), int(s.months[t, 1]), SPLIT_NAMES[s.split[t]], int(s.labels[t]), float(p[t])

    write_csv(path, ["playa_id", "year", "month", "split", "label", "probability"], rows())
    return path


def predict(cfg: RunConfig, ckpt: Checkpoint, out: Optional[str] = None) -> Path:
    outdir = _outdir(cfg, out)
    samples, _, probs = score(cfg, ckpt)
    path = write_predictions(outdir, samples, probs)
    cfg.write(outdir)
    return path


def timeline_panels(samples, probs, split_code: int = TEST):
    """Best, median and worst playas by test loss, skipping never-wet playas."""
    rows = metrics.per_entity_metrics(samples, probs, 0.5, split_code)
    by_id = {s.playa_id: k for k, s in enumerate(samples)}
    wet = [r for r in rows if samples[by_id[r.playa_id]].labels.any()]
    if not wet:
        return []
    ranked = sorted(wet, key=lambda r: (r.bce_loss, r.playa_id))
    picks = [("best", ranked[0]), ("median", ranked[len(ranked) // 2]), ("worst", ranked[-1])]
    panels = []
    for tag, r in picks:
        k = by_id[r.playa_id]
        panels.append((f"playa {r.playa_id} ({tag} test loss {r.bce_loss:.4f})", samples[k].labels, probs[k]))
    return panels


def report(cfg: RunConfig, ckpt: Checkpoint, out: Optional[str] = None, cutoff: Optional[float] = None, select: bool = False) -> dict:
    """Evaluation tables, predictions and SVG figures in one directory."""
    outdir = _outdir(cfg, out)
    samples, logits, probs = score(cfg, ckpt)
    doc = write_evaluation(outdir, cfg, samples, logits, probs, cutoff, select)
    write_predictions(outdir, samples, probs)
    cut = doc["cutoff"]

    curves = {}
    for code in (VALIDATION, TEST):
        labels, p, cols = _split_arrays(samples, probs, code)
        if cols.any() and labels.any() and not labels.all():
            fpr, tpr, _ = metrics.roc_curve(p, labels)
            curves[SPLIT_NAMES[code]] = (fpr, tpr, metrics.auc(fpr, tpr))
    if curves:
        plots.plot_roc(curves, outdir / "roc.svg")
    panels = timeline_panels(samples, probs)
    if panels:
        plots.plot_timelines(panels, samples[0].months, outdir / "timelines.svg")
    labels_all = np.stack([s.labels for s in samples])
    truth = metrics.regional_fraction(labels_all, cut)
    pred = metrics.regional_fraction(probs, cut)
    write_csv(
        outdir / "fraction_all.csv",
        ["year", "month", "truth_fraction", "predicted_fraction"],
        zip(samples[0].months[:, 0], samples[0].months[:, 1], truth, pred),
    )
    boundaries = [ckpt.split.validation[0], ckpt.split.test[0]]
    plots.plot_fraction(samples[0].months, truth, pred, outdir / "fraction.svg", boundaries)
    return doc


def synth(out: str, n_playas: int = 50, n_years: int = 10, seed: int = 7, rasters: bool = False) -> RunConfig:
    """Write a synthetic dataset and a matching run config into ``out``."""
    outdir = Path(out)
    playas, monthly, lulc, spec = data.synth_tables(n_playas, n_years, seed)
    paths = data.write_tables(outdir, playas, monthly, lulc)
    raster_paths = {}
    if rasters:
        raster_paths = write_synth_rasters(outdir / "rasters", sorted(lulc["year"].unique()), seed)
    cfg = RunConfig(
        playas=paths["playas"].name,
        monthly=paths["monthly"].name,
        lulc=paths["lulc"].name,
        rasters={str(y): str(p.relative_to(outdir)) for y, p in raster_paths.items()},
        model={"hidden_size": 16, "embed_dims": {"playa": 16, "huc8": 8, "author": 4}},
        split=spec,
        output_dir="run",
        seed=seed,
    )
    cfg.train.batch_size = 16
    cfg.write(outdir)
    return cfg


def write_synth_rasters(directory: Path, years, seed: int, extent: float = 1e5, cell_size: float = 250.0) -> Dict[int, Path]:
    """Blocky random land-cover rasters covering the synthetic centroid extent."""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, 1])
    codes = np.array([c for group in data.LULC_CLASSES.values() for c in group])
    margin = 1000.0
    n = int(np.ceil((extent + 2 * margin) / cell_size))
    block = 8
    out = {}
    base = rng.choice(codes, size=(n // block + 1, n // block + 1))
    for year in years:
        changed = np.where(rng.random(base.shape) < 0.05, rng.choice(codes, size=base.shape), base)
        base = changed
        values = np.kron(changed, np.ones((block, block), dtype=np.int64))[:n, :n]
        grid = RasterGrid(n, n, -margin, extent + margin, cell_size, values, nodata=0)
        path = directory / f"lulc_{int(year)}.json"
        write_grid(grid, path, binary=True)
        out[int(year)] = path
    return out


def extract(cfg: RunConfig, out: Optional[str] = None) -> Path:
    """Monte-Carlo buffer extraction over every configured raster year -> lulc.csv."""
    if not cfg.rasters:
        raise DataError("no rasters configured (config key 'rasters': {year: header.json})")
    outdir = _outdir(cfg, out)
    centers = data.read_playa_centroids(cfg.playas)
    if cfg.max_playas is not None:
        keep = sorted(centers["playa_id"], key=data.natural_key)[: cfg.max_playas]
        centers = centers[centers["playa_id"].isin(set(keep))]
    grids = {int(y): read_grid(p) for y, p in cfg.rasters.items()}
    table = extract_lulc(centers, grids, cfg.buffer, dict(data.LULC_CLASSES))
    path = outdir / "lulc.csv"
    write_csv(path, list(table.columns), table.itertuples(index=False, name=None))
    cfg.write(outdir)
    return path
