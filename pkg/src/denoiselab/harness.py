"""Sentence-level evaluation metrics, per-category filter rates, and reports.

Correction metrics follow the sentence-level convention: a true positive is
an erroneous sentence the model changed and restored exactly; precision runs
over sentences the model changed at all, recall over sentences containing at
least one planted error.  The false positive rate is the share of evaluated
sentences in which some initially-correct token got modified, among
sentences containing at least one initially-correct token.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import PairCorpus, SampleCategory, corpus_arrays
from .calibration import CalibrationReport
from .corrector import CorrectorModel, correct_corpus

PACKAGE_VERSION = "0.1.0"


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    fpr: float
    char_accuracy: float
    tp: int
    fp_mod: int
    fn: int
    n_err_sentences: int
    n_clean_sentences: int

    @property
    def counts(self) -> tuple[int, int, int, int, int]:
        return (self.tp, self.fp_mod, self.fn, self.n_err_sentences, self.n_clean_sentences)


def _metrics_from_matrices(clean: np.ndarray, corr: np.ndarray, out: np.ndarray,
                           lengths: np.ndarray) -> Metrics:
    lmax = clean.shape[1]
    valid = np.arange(lmax)[None, :] < lengths[:, None]

    has_error = np.any((clean != corr) & valid, axis=1)
    changed = np.any((out != corr) & valid, axis=1)
    exact = np.all((out == clean) | ~valid, axis=1)
    tp = int(np.sum(has_error & changed & exact))

    n_modified = int(changed.sum())
    n_err = int(has_error.sum())
    precision = 100.0 * tp / n_modified if n_modified > 0 else 0.0
    recall = 100.0 * tp / n_err if n_err > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    correct_pos = (clean == corr) & valid
    broke_correct = np.any(correct_pos & (out != corr), axis=1)
    has_correct = np.any(correct_pos, axis=1)
    denom = int(has_correct.sum())
    fpr = 100.0 * int(np.sum(broke_correct & has_correct)) / denom if denom > 0 else 0.0

    char_accuracy = 100.0 * float(np.sum((out == clean) & valid)) / float(valid.sum())
    return Metrics(precision, recall, f1, fpr, char_accuracy,
                   tp, n_modified - tp, n_err - tp, n_err, int((~has_error).sum()))


def evaluate(model, corpus: PairCorpus) -> Metrics:
    """Sentence-level correction metrics of a model over a pair corpus.

    ``model`` is anything with a per-position ``predict``; trained correctors
    take a vectorized path.
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    clean, corr, lengths = corpus_arrays(corpus)
    if isinstance(model, CorrectorModel):
        out = correct_corpus(model, corpus)
    else:
        out = corr.copy()
        for i, rec in enumerate(corpus.records):
            toks = rec.corrupted
            for pos in range(rec.length):
                probs = model.predict(toks, pos)
                top = probs.max()
                if probs[toks[pos]] == top:
                    continue  # ties keep the written token
                out[i, pos] = int(np.argmax(probs))
    return _metrics_from_matrices(clean, corr, out, lengths)


@dataclass(frozen=True)
class CategoryRate:
    reverted: int
    total: int

    @property
    def ratio(self) -> float:
        return self.reverted / self.total if self.total > 0 else 0.0


def category_filter_rates(before: PairCorpus, after: PairCorpus) -> dict[SampleCategory, CategoryRate]:
    """Per-category share of edits a filtering pass reverted.

    ``before`` must carry category annotations; ``after`` is the filtered
    corpus aligned record-by-record (same clean sides).
    """
    if len(before) != len(after):
        raise ValueError("corpora have different record counts")
    reverted = {c: 0 for c in SampleCategory}
    totals = {c: 0 for c in SampleCategory}
    for rec_b, rec_a in zip(before.records, after.records):
        if rec_b.clean != rec_a.clean:
            raise ValueError("corpora are not aligned on their clean sides")
        if rec_b.categories is None:
            raise ValueError("before-corpus lacks category annotations")
        surviving = {i for i, _, _ in rec_a.edits}
        for (i, _, _), cat in zip(rec_b.edits, rec_b.categories):
            totals[cat] += 1
            if i not in surviving:
                reverted[cat] += 1
    return {c: CategoryRate(reverted[c], totals[c]) for c in SampleCategory}


METRICS_HEADER = ["variant", "p", "size", "P", "R", "F1", "FPR", "ECE", "seed"]


@dataclass(frozen=True)
class MetricsRow:
    variant: str
    p: float
    size: int
    metrics: Metrics
    ece: float
    seed: int

    def as_csv(self) -> list[str]:
        m = self.metrics
        return [self.variant, f"{self.p:.6g}", str(self.size),
                f"{m.precision:.4f}", f"{m.recall:.4f}", f"{m.f1:.4f}",
                f"{m.fpr:.4f}", f"{self.ece:.6f}", str(self.seed)]


def write_metrics_csv(rows: list[MetricsRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow(row.as_csv())


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def config_hash(config_doc: dict) -> str:
    canonical = json.dumps(config_doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def emit_report(out_dir: str | Path, *, metrics_rows: list[MetricsRow],
                reliability: CalibrationReport | None = None,
                config_doc: dict | None = None, seed: int = 0,
                extra_files: dict[str, str | Path] | None = None) -> dict[str, Path]:
    """Write metrics.csv, optional reliability.csv, and a hashing manifest.

    Outputs are byte-identical across reruns with the same inputs: no
    timestamps, sorted keys, fixed float formatting.
    """
    from .calibration import write_reliability_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    metrics_path = out / "metrics.csv"
    write_metrics_csv(metrics_rows, metrics_path)
    written["metrics.csv"] = metrics_path

    if reliability is not None:
        rel_path = out / "reliability.csv"
        write_reliability_csv(reliability, rel_path)
        written["reliability.csv"] = rel_path

    for name, src in (extra_files or {}).items():
        written[name] = Path(src)

    manifest = {
        "config_hash": config_hash(config_doc or {}),
        "seed": seed,
        "versions": {"denoiselab": PACKAGE_VERSION, "numpy": np.__version__},
        "files": {name: sha256_file(p) for name, p in sorted(written.items())},
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    written["manifest.json"] = manifest_path
    return written


def verify_manifest(out_dir: str | Path) -> tuple[bool, dict[str, bool]]:
    """Recompute file hashes recorded in a run directory's manifest."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    checks = {}
    for name, digest in manifest["files"].items():
        path = out / name
        checks[name] = path.exists() and sha256_file(path) == digest
    return all(checks.values()), checks
