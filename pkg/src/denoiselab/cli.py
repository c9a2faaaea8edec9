"""Command-line interface.

Every command writes its outputs under ``--out-dir`` together with a
``manifest.json`` recording the config hash, the seed, and a SHA-256 digest
of each produced file.  Reruns with identical config and seed produce
byte-identical files.  Corpus directories produced by ``gen-corpus`` are
self-describing and are consumed by the downstream commands.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click
import numpy as np

from . import augment, calibration, corrector, harness, oracle, pipeline, world
from .config import (experiment_config_to_dict, load_experiment_config)
from .harness import MetricsRow, config_hash, emit_report, sha256_file


def _write_manifest(out_dir: Path, config_doc: dict, seed: int,
                    files: dict[str, Path], meta: dict | None = None) -> None:
    manifest = {
        "config_hash": config_hash(config_doc),
        "seed": seed,
        "versions": {"denoiselab": harness.PACKAGE_VERSION, "numpy": np.__version__},
        "files": {name: sha256_file(path) for name, path in sorted(files.items())},
    }
    if meta:
        manifest["meta"] = meta
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _load_corpus_dir(corpus_dir: Path):
    meta = json.loads((corpus_dir / "manifest.json").read_text())["meta"]
    w = world.load_world(corpus_dir / "world.json")
    table = augment.load_confusion(corpus_dir / "confusion.json")
    corpus = augment.corpus_from_jsonl(corpus_dir / "corpus.jsonl",
                                       vocab_size=meta["vocab_size"],
                                       rate=meta["rate"], mode=meta["mode"])
    return w, table, corpus, meta


@click.group()
def main():
    """Synthetic corpus-denoising laboratory."""


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      default=None, help="JSON experiment config")(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--out-dir", type=click.Path(), required=True)(fn)
    return fn


@main.command("gen-world")
@_common_options
def gen_world(config_path, seed, out_dir):
    """Build a world and save it as JSON."""
    cfg = load_experiment_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    w = world.build_world(dataclasses.replace(cfg.world, seed=seed))
    path = out / "world.json"
    world.save_world(w, path)
    _write_manifest(out, experiment_config_to_dict(cfg), seed, {"world.json": path})
    click.echo(f"world: V={w.vocab_size} order={w.order} -> {path}")


@main.command("gen-corpus")
@_common_options
@click.option("--channel", type=click.Choice(["uniform", "long_tailed"]),
              default="long_tailed", show_default=True)
@click.option("--mode", type=click.Choice(["iid", "single_edit"]),
              default="iid", show_default=True)
@click.option("--sentences", type=int, default=None,
              help="Override the config's target corpus size")
@click.option("--annotate/--no-annotate", default=True, show_default=True)
def gen_corpus(config_path, seed, out_dir, channel, mode, sentences, annotate):
    """Generate an aligned pair corpus through the chosen channel."""
    cfg = load_experiment_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    w, uniform_table, longtail_table = pipeline.build_experiment_world(cfg, seed)
    table = uniform_table if channel == "uniform" else longtail_table
    n = sentences if sentences is not None else cfg.do_sentences
    corpus = augment.generate_corpus(w, table, n, cfg.length_range, cfg.rate,
                                     mode=mode, seed=seed, annotate=annotate)
    files = {}
    world.save_world(w, out / "world.json")
    augment.save_confusion(table, out / "confusion.json")
    augment.corpus_to_jsonl(corpus, out / "corpus.jsonl")
    for name in ("world.json", "confusion.json", "corpus.jsonl"):
        files[name] = out / name
    meta = {"vocab_size": w.vocab_size, "rate": cfg.rate, "mode": mode,
            "channel": channel, "sentences": n, "n_edits": corpus.n_edits}
    _write_manifest(out, experiment_config_to_dict(cfg), seed, files, meta)
    click.echo(f"corpus: {n} sentences, {corpus.n_edits} edits -> {out}")


@main.command("train")
@_common_options
@click.option("--corpus-dir", type=click.Path(exists=True), required=True)
@click.option("--window", type=str, default=None,
              help="Comma-separated offsets, e.g. '-1,0,1'")
def train_cmd(config_path, seed, out_dir, corpus_dir, window):
    """Train a corrector on a stored corpus."""
    cfg = load_experiment_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, _, corpus, _ = _load_corpus_dir(Path(corpus_dir))
    offsets = (tuple(int(x) for x in window.split(",")) if window
               else cfg.corrector.window)
    model = corrector.train(corpus, offsets, cfg.corrector.alpha)
    path = out / "model.json"
    corrector.save_model(model, path)
    _write_manifest(out, experiment_config_to_dict(cfg), seed, {"model.json": path},
                    meta={"trained_chars": model.trained_chars,
                          "window": list(model.window)})
    click.echo(f"model: {model.trained_chars} chars, window {model.window} -> {path}")


@main.command("score")
@_common_options
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--corpus-dir", type=click.Path(exists=True), required=True)
@click.option("--oracle/--no-oracle", "with_oracle", default=False,
              help="Also write exact posteriors (single-edit records only)")
def score_cmd(config_path, seed, out_dir, model_path, corpus_dir, with_oracle):
    """Write per-edit restore confidences as JSONL."""
    cfg = load_experiment_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    w, table, corpus, meta = _load_corpus_dir(Path(corpus_dir))
    model = corrector.load_model(model_path)

    places = [(ri, edit[0]) for ri, _, _, edit in corpus.iter_edits()]
    rows = corrector.predict_at(model, corpus, places) if places else np.empty((0, 0))
    path = out / "scores.jsonl"
    with open(path, "w") as fh:
        for k, (ri, rec, ei, (i, x, y)) in enumerate(corpus.iter_edits()):
            doc = {"record": ri, "position": i, "original": x, "replacement": y,
                   "confidence": float(rows[k, x])}
            if with_oracle and len(rec.edits) == 1:
                rep = oracle.posterior(w, table, rec, 0, meta["rate"])
                doc["oracle_posterior"] = rep.posterior
                doc["category"] = rep.category.value
                doc["sigma"] = rep.sigma
                doc["bound"] = rep.bound
            fh.write(json.dumps(doc) + "\n")
    _write_manifest(out, experiment_config_to_dict(cfg), seed, {"scores.jsonl": path},
                    meta={"edits": len(places)})
    click.echo(f"scored {len(places)} edits -> {path}")


@main.command("filter")
@_common_options
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--corpus-dir", type=click.Path(exists=True), required=True)
@click.option("--threshold", type=float, default=None,
              help="Restore-confidence cutoff; below it edits are reverted")
def filter_cmd(config_path, seed, out_dir, model_path, corpus_dir, threshold):
    """Revert low-confidence edits of a stored corpus."""
    cfg = load_experiment_config(config_path)
    p = threshold if threshold is not None else cfg.filter.threshold
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, _, corpus, meta = _load_corpus_dir(Path(corpus_dir))
    model = corrector.load_model(model_path)
    result = pipeline.filter_corpus(model, corpus, p)
    path = out / "filtered.jsonl"
    augment.corpus_to_jsonl(result.corpus, path)
    _write_manifest(out, experiment_config_to_dict(cfg), seed, {"filtered.jsonl": path},
                    meta={"threshold": p, "kept": result.kept_edits,
                          "reverted": result.reverted_edits, **meta})
    click.echo(f"kept {result.kept_edits}, reverted {result.reverted_edits} -> {path}")


@main.command("eval")
@_common_options
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--corpus-dir", type=click.Path(exists=True), required=True)
@click.option("--variant", type=str, default="model", show_default=True)
def eval_cmd(config_path, seed, out_dir, model_path, corpus_dir, variant):
    """Evaluate a stored model on a stored corpus."""
    cfg = load_experiment_config(config_path)
    _, _, corpus, _ = _load_corpus_dir(Path(corpus_dir))
    model = corrector.load_model(model_path)
    metrics = harness.evaluate(model, corpus)
    calib = calibration.calibration_report(model, corpus)
    rows = [MetricsRow(variant, cfg.filter.threshold, model.trained_chars,
                       metrics, calib.ece, seed)]
    emit_report(out_dir, metrics_rows=rows, reliability=calib,
                config_doc=experiment_config_to_dict(cfg), seed=seed)
    click.echo(f"F1 {metrics.f1:.2f}  FPR {metrics.fpr:.2f}  ECE {calib.ece:.4f}")


@main.command("pipeline")
@_common_options
@click.option("--mode", type=click.Choice(list(pipeline.FILTER_SOURCES)),
              default=None, help="Filter source; defaults to the config's")
@click.option("--threshold", type=float, default=None)
def pipeline_cmd(config_path, seed, out_dir, mode, threshold):
    """Run the full train-filter-retrain pipeline."""
    cfg = load_experiment_config(config_path)
    fc = cfg.filter
    if mode is not None:
        fc = dataclasses.replace(fc, filter_source=mode)
    if threshold is not None:
        fc = dataclasses.replace(fc, threshold=threshold)
    cfg = dataclasses.replace(cfg, filter=fc)

    w, uniform_table, longtail_table = pipeline.build_experiment_world(cfg, seed)
    report = pipeline.run_pipeline(w, uniform_table, longtail_table, cfg, seed)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    filtered_path = out / "filtered.jsonl"
    augment.corpus_to_jsonl(report.filtered, filtered_path)
    summary = {
        "variant": report.variant,
        "threshold": report.threshold,
        "kept_edits": report.kept_edits,
        "reverted_edits": report.reverted_edits,
        "category_filter_ratios": (
            {cat.value: report.category_rates[cat].ratio for cat in report.category_rates}
            if report.category_rates else None),
        "fpr_before": report.metrics_before.fpr,
        "fpr_after": report.metrics_after.fpr,
        "f1_before": report.metrics_before.f1,
        "f1_after": report.metrics_after.f1,
        "ece_before": report.calibration_before.ece,
        "ece_after": report.calibration_after.ece,
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    rows = [
        MetricsRow("baseline", report.threshold, cfg.do_sentences,
                   report.metrics_before, report.calibration_before.ece, seed),
        MetricsRow(report.variant, report.threshold, cfg.do_sentences,
                   report.metrics_after, report.calibration_after.ece, seed),
    ]
    emit_report(out, metrics_rows=rows, reliability=report.calibration_after,
                config_doc=experiment_config_to_dict(cfg), seed=seed,
                extra_files={"filtered.jsonl": filtered_path,
                             "report.json": report_path})
    click.echo(json.dumps(summary, sort_keys=True))


@main.command("sweep-threshold")
@_common_options
def sweep_threshold_cmd(config_path, seed, out_dir):
    """Run the pipeline across the threshold grid."""
    cfg = load_experiment_config(config_path)
    w, uniform_table, longtail_table = pipeline.build_experiment_world(cfg, seed)
    points = pipeline.threshold_sweep(w, uniform_table, longtail_table, cfg, seed=seed)
    rows = [MetricsRow("cross", pt.threshold, cfg.do_sentences, pt.metrics,
                       pt.ece, seed) for pt in points]
    emit_report(out_dir, metrics_rows=rows,
                config_doc=experiment_config_to_dict(cfg), seed=seed)
    for pt in points:
        click.echo(f"p={pt.threshold:g} F1={pt.metrics.f1:.2f} "
                   f"FPR={pt.metrics.fpr:.2f} ECE={pt.ece:.4f}")


@main.command("sweep-volume")
@_common_options
def sweep_volume_cmd(config_path, seed, out_dir):
    """Grow the filter-model training volume along the configured ladder."""
    cfg = load_experiment_config(config_path)
    w, uniform_table, longtail_table = pipeline.build_experiment_world(cfg, seed)
    points = pipeline.volume_sweep(w, uniform_table, longtail_table, cfg, seed=seed)
    rows = [MetricsRow("volume", 1e-2, pt.size_chars, pt.metrics, pt.ece, seed)
            for pt in points]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tv_path = out / "volume_tv.csv"
    with open(tv_path, "w") as fh:
        fh.write("size,tv_distance\n")
        for pt in points:
            fh.write(f"{pt.size_chars},{pt.tv_distance:.8f}\n")
    emit_report(out, metrics_rows=rows,
                config_doc=experiment_config_to_dict(cfg), seed=seed,
                extra_files={"volume_tv.csv": tv_path})
    for pt in points:
        click.echo(f"size={pt.size_chars} F1={pt.metrics.f1:.2f} tv={pt.tv_distance:.4f}")


@main.command("report")
@click.option("--out-dir", type=click.Path(exists=True), required=True)
def report_cmd(out_dir):
    """Verify a run directory's manifest and print its summary."""
    ok, checks = harness.verify_manifest(out_dir)
    for name, good in sorted(checks.items()):
        click.echo(f"{'ok ' if good else 'BAD'} {name}")
    metrics_path = Path(out_dir) / "metrics.csv"
    if metrics_path.exists():
        click.echo(metrics_path.read_text().rstrip())
    if not ok:
        raise click.ClickException("manifest hash mismatch")
    click.echo("manifest verified")


if __name__ == "__main__":
    main()
