"""Trainable non-autoregressive corrector backed by smoothed count tables.

The model estimates the probability of each clean token given a small
window of the corrupted sentence, by counting (window signature -> clean
token) pairs over an aligned pair corpus and smoothing with a symmetric
pseudo-count.  A window of (-1, 0, 1) conditions on the observed token and
its neighbors; a center-free window such as (-1, 1) yields the masked
variant used to query what fits a context regardless of what is written
there.

Counting is associative: models trained on corpus shards merge exactly into
the model trained on the concatenation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import PairCorpus, corpus_arrays, corpus_digest

DEFAULT_WINDOW = (-1, 0, 1)
MASKED_WINDOW = (-1, 1)

# Dense signature tables; (V+1)**len(window) * V entries must stay desk-sized.
_TABLE_BUDGET = 5 * 10**7


@dataclass(frozen=True)
class CorrectorConfig:
    window: tuple[int, ...] = DEFAULT_WINDOW
    alpha: float = 0.1


@dataclass(eq=False)
class CorrectorModel:
    vocab_size: int
    window: tuple[int, ...]
    alpha: float
    counts: np.ndarray           # (n_signatures, V) int64
    center_counts: np.ndarray | None   # (V, V) when the window includes offset 0
    target_counts: np.ndarray    # (V,) global marginal over clean tokens
    trained_chars: int
    trained_on: str              # human-readable corpus descriptor
    corpus_hash: str             # content digest of the training corpus

    @property
    def pad(self) -> int:
        return self.vocab_size

    @property
    def n_signatures(self) -> int:
        return (self.vocab_size + 1) ** len(self.window)

    def predict(self, tokens, position: int) -> np.ndarray:
        return predict(self, tokens, position)

    def correct(self, tokens) -> tuple[int, ...]:
        return correct(self, tokens)


def _signature_table_shape(vocab_size: int, window: tuple[int, ...]) -> int:
    n_sigs = (vocab_size + 1) ** len(window)
    if n_sigs * vocab_size > _TABLE_BUDGET:
        raise ValueError("window/vocabulary too large for a dense count table")
    return n_sigs


def _signatures(corr_mat: np.ndarray, lengths: np.ndarray, vocab_size: int,
                window: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Signature ids for every valid position; returns (sig matrix, valid mask)."""
    n, lmax = corr_mat.shape
    reach = max(abs(off) for off in window)
    padded = np.full((n, lmax + 2 * reach), vocab_size, dtype=np.int64)
    padded[:, reach:reach + lmax] = corr_mat
    base = vocab_size + 1
    sig = np.zeros((n, lmax), dtype=np.int64)
    scale = 1
    for off in window:
        sig += padded[:, reach + off: reach + off + lmax] * scale
        scale *= base
    mask = np.arange(lmax)[None, :] < lengths[:, None]
    return sig, mask


def train(corpus: PairCorpus, window: tuple[int, ...] = DEFAULT_WINDOW,
          alpha: float = 0.1) -> CorrectorModel:
    """Count (signature -> clean token) pairs over every position of the corpus."""
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    if len(window) == 0:
        raise ValueError("window needs at least one offset")
    V = corpus.vocab_size
    n_sigs = _signature_table_shape(V, window)

    clean_mat, corr_mat, lengths = corpus_arrays(corpus)
    sig, mask = _signatures(corr_mat, lengths, V, window)
    sig_f = sig[mask]
    tgt_f = clean_mat[mask]

    counts = np.bincount(sig_f * V + tgt_f, minlength=n_sigs * V)
    counts = counts.reshape(n_sigs, V).astype(np.int64)
    center_counts = None
    if 0 in window:
        centers = corr_mat[mask]
        center_counts = np.bincount(centers * V + tgt_f, minlength=V * V)
        center_counts = center_counts.reshape(V, V).astype(np.int64)
    target_counts = np.bincount(tgt_f, minlength=V).astype(np.int64)

    digest = corpus_digest(corpus)
    descriptor = f"{len(corpus)}r:{int(mask.sum())}c"
    return CorrectorModel(V, tuple(window), float(alpha), counts, center_counts,
                          target_counts, int(mask.sum()), descriptor, digest)


def merge(first: CorrectorModel, second: CorrectorModel) -> CorrectorModel:
    """Exact combination of two models trained with identical settings."""
    if (first.vocab_size, first.window, first.alpha) != \
            (second.vocab_size, second.window, second.alpha):
        raise ValueError("models disagree on vocabulary, window, or alpha")
    center = None
    if first.center_counts is not None:
        center = first.center_counts + second.center_counts
    combined = hashlib.sha256(
        (first.corpus_hash + second.corpus_hash).encode()).hexdigest()
    return CorrectorModel(
        first.vocab_size, first.window, first.alpha,
        first.counts + second.counts, center,
        first.target_counts + second.target_counts,
        first.trained_chars + second.trained_chars,
        f"merge({first.trained_on},{second.trained_on})",
        combined,
    )


def _rows_for(model: CorrectorModel, sig_f: np.ndarray,
              centers: np.ndarray | None) -> np.ndarray:
    """Smoothed probability rows with the unseen-signature fallback chain.

    Unseen signature -> center marginal (when the window has a center) ->
    global target marginal; smoothing turns an all-zero row into uniform.
    """
    rows = model.counts[sig_f].astype(float)
    totals = rows.sum(axis=1)
    missing = totals == 0.0
    if np.any(missing):
        if model.center_counts is not None and centers is not None:
            fallback = model.center_counts[centers[missing]].astype(float)
        else:
            fallback = np.broadcast_to(model.target_counts.astype(float),
                                       (int(missing.sum()), model.vocab_size)).copy()
        rows[missing] = fallback
        totals = rows.sum(axis=1)
    alpha = model.alpha
    return (rows + alpha) / (totals + alpha * model.vocab_size)[:, None]


def _position_signature(model: CorrectorModel, tokens, position: int) -> tuple[int, int]:
    L = len(tokens)
    base = model.vocab_size + 1
    sig = 0
    scale = 1
    for off in model.window:
        j = position + off
        feat = int(tokens[j]) if 0 <= j < L else model.pad
        sig += feat * scale
        scale *= base
    return sig, int(tokens[position])


def predict(model: CorrectorModel, tokens, position: int) -> np.ndarray:
    """Smoothed distribution over clean tokens for one position."""
    if not (0 <= position < len(tokens)):
        raise ValueError("position out of range")
    sig, center = _position_signature(model, tokens, position)
    rows = _rows_for(model, np.array([sig]), np.array([center]))
    return rows[0]


def predict_at(model: CorrectorModel, corpus: PairCorpus,
               places: list[tuple[int, int]]) -> np.ndarray:
    """Batch prediction at (record_index, position) pairs."""
    sigs = np.empty(len(places), dtype=np.int64)
    centers = np.empty(len(places), dtype=np.int64)
    for k, (ri, pos) in enumerate(places):
        sigs[k], centers[k] = _position_signature(model, corpus.records[ri].corrupted, pos)
    return _rows_for(model, sigs, centers)


def predict_matrix(model: CorrectorModel, corr_mat: np.ndarray,
                   lengths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Probability rows for every valid position of padded sentence matrices.

    Returns (probs, mask) where probs has shape (n_valid_positions, V) in
    row-major position order and mask marks the valid positions.
    """
    sig, mask = _signatures(corr_mat, lengths, model.vocab_size, model.window)
    centers = corr_mat[mask]
    probs = _rows_for(model, sig[mask], centers)
    return probs, mask


def _argmax_keep_ties(probs: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Row argmax, breaking ties toward the input token, then the lowest id."""
    out = np.argmax(probs, axis=1)
    row_max = probs[np.arange(len(probs)), out]
    keep = probs[np.arange(len(probs)), inputs] == row_max
    out[keep] = inputs[keep]
    return out


def correct(model: CorrectorModel, tokens) -> tuple[int, ...]:
    """Per-position argmax decode of one sentence."""
    toks = tuple(int(t) for t in tokens)
    sigs = np.empty(len(toks), dtype=np.int64)
    centers = np.empty(len(toks), dtype=np.int64)
    for pos in range(len(toks)):
        sigs[pos], centers[pos] = _position_signature(model, toks, pos)
    probs = _rows_for(model, sigs, centers)
    out = _argmax_keep_ties(probs, centers)
    return tuple(int(t) for t in out)


def correct_corpus(model: CorrectorModel, corpus: PairCorpus) -> np.ndarray:
    """Vectorized decode of a whole corpus; returns the padded output matrix."""
    clean_mat, corr_mat, lengths = corpus_arrays(corpus)
    probs, mask = predict_matrix(model, corr_mat, lengths)
    out = corr_mat.copy()
    out[mask] = _argmax_keep_ties(probs, corr_mat[mask])
    return out


def ce_loss(model: CorrectorModel, corpus: PairCorpus) -> float:
    """Mean per-token negative log probability of the clean token."""
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    clean_mat, corr_mat, lengths = corpus_arrays(corpus)
    probs, mask = predict_matrix(model, corr_mat, lengths)
    picked = probs[np.arange(probs.shape[0]), clean_mat[mask]]
    return float(np.mean(-np.log(picked)))


def model_to_json(model: CorrectorModel) -> str:
    nonzero = np.flatnonzero(model.counts.sum(axis=1))
    doc = {
        "vocab_size": model.vocab_size,
        "window": list(model.window),
        "alpha": model.alpha,
        "corpus_hash": model.corpus_hash,
        "trained_chars": model.trained_chars,
        "trained_on": model.trained_on,
        "counts": {str(int(s)): model.counts[s].tolist() for s in nonzero},
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> CorrectorModel:
    doc = json.loads(text)
    V = int(doc["vocab_size"])
    window = tuple(int(o) for o in doc["window"])
    n_sigs = _signature_table_shape(V, window)
    counts = np.zeros((n_sigs, V), dtype=np.int64)
    for key, row in doc["counts"].items():
        counts[int(key)] = row

    base = V + 1
    center_counts = None
    if 0 in window:
        j = window.index(0)
        center_counts = np.zeros((V, V), dtype=np.int64)
        for key in doc["counts"]:
            sig = int(key)
            center = (sig // base ** j) % base
            center_counts[center] += counts[sig]
    target_counts = counts.sum(axis=0)
    return CorrectorModel(V, window, float(doc["alpha"]), counts, center_counts,
                          target_counts.astype(np.int64), int(doc["trained_chars"]),
                          doc["trained_on"], doc["corpus_hash"])


def save_model(model: CorrectorModel, path: str | Path) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path: str | Path) -> CorrectorModel:
    return model_from_json(Path(path).read_text())
