"""Reliability diagrams and expected calibration error.

Outcomes are per-position predictions: the top-1 confidence, whether the
argmax matched the clean token, and how much mass the model kept on the
written token.  Positions where almost all mass stays on the input are easy
positives; excluding them before binning keeps the diagram from being
swamped by trivially-correct keep decisions.

Binning rule: equal-width bins over [0, 1]; a confidence exactly on a bin
boundary belongs to the upper bin, except 1.0 which stays in the top bin.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import PairCorpus, corpus_arrays
from .corrector import CorrectorModel, _argmax_keep_ties, predict_matrix


@dataclass(frozen=True)
class PredictionOutcome:
    confidence: float          # probability of the predicted token
    correct: bool              # predicted token == clean token
    kept_mass_on_input: float  # probability assigned to the written token


@dataclass(frozen=True)
class CalibrationBin:
    lower: float
    upper: float
    mean_confidence: float
    accuracy: float
    count: int


@dataclass(frozen=True)
class CalibrationReport:
    bins: tuple[CalibrationBin, ...]
    ece: float
    n_excluded: int

    @property
    def n_outcomes(self) -> int:
        return sum(b.count for b in self.bins)


def collect_outcomes(model: CorrectorModel, corpus: PairCorpus) -> list[PredictionOutcome]:
    """One outcome per character position of the corpus."""
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    clean_mat, corr_mat, lengths = corpus_arrays(corpus)
    probs, mask = predict_matrix(model, corr_mat, lengths)
    inputs = corr_mat[mask]
    targets = clean_mat[mask]
    preds = _argmax_keep_ties(probs, inputs)
    confidence = probs[np.arange(len(preds)), preds]
    kept = probs[np.arange(len(preds)), inputs]
    correct = preds == targets
    return [
        PredictionOutcome(float(c), bool(ok), float(k))
        for c, ok, k in zip(confidence, correct, kept)
    ]


def filter_easy_positives(outcomes: list[PredictionOutcome],
                          cutoff: float = 0.1) -> list[PredictionOutcome]:
    """Keep outcomes whose mass off the written token is at least ``cutoff``."""
    return [o for o in outcomes if (1.0 - o.kept_mass_on_input) >= cutoff]


def ece(outcomes: list[PredictionOutcome], n_bins: int = 10,
        n_excluded: int = 0) -> CalibrationReport:
    """Equal-width-bin expected calibration error with its reliability table."""
    if not outcomes:
        raise ValueError("cannot compute calibration on an empty outcome list")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    conf = np.array([o.confidence for o in outcomes])
    correct = np.array([o.correct for o in outcomes], dtype=float)
    idx = np.clip((conf * n_bins).astype(np.int64), 0, n_bins - 1)

    bins = []
    total = len(outcomes)
    value = 0.0
    for b in range(n_bins):
        sel = idx == b
        count = int(sel.sum())
        if count == 0:
            bins.append(CalibrationBin(b / n_bins, (b + 1) / n_bins, 0.0, 0.0, 0))
            continue
        mean_conf = float(conf[sel].mean())
        accuracy = float(correct[sel].mean())
        bins.append(CalibrationBin(b / n_bins, (b + 1) / n_bins, mean_conf, accuracy, count))
        value += (count / total) * abs(accuracy - mean_conf)
    return CalibrationReport(tuple(bins), value, n_excluded)


def calibration_report(model: CorrectorModel, corpus: PairCorpus,
                       cutoff: float = 0.1, n_bins: int = 10) -> CalibrationReport:
    """Outcome collection, easy-positive exclusion, and binning in one step."""
    outcomes = collect_outcomes(model, corpus)
    kept = filter_easy_positives(outcomes, cutoff)
    if not kept:
        raise ValueError("easy-positive exclusion removed every outcome")
    return ece(kept, n_bins=n_bins, n_excluded=len(outcomes) - len(kept))


def write_reliability_csv(report: CalibrationReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lower", "bin_upper", "mean_confidence", "accuracy", "count"])
        for b in report.bins:
            writer.writerow([f"{b.lower:.2f}", f"{b.upper:.2f}",
                             f"{b.mean_confidence:.10g}", f"{b.accuracy:.10g}", b.count])
