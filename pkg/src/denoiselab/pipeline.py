"""Train-filter-retrain pipeline and its baselines and sweeps.

The core loop: train a filtering model on a uniform-replacement corpus,
score every planted edit of a long-tailed corpus with the filter's restore
confidence, revert edits scoring below a threshold, and train the final
model on the cleaned corpus.  Variants swap the filter source (the target
corpus itself, a masked-context heuristic, plain mixing, or no filtering),
and sweeps walk the threshold grid and the filter-training volume ladder.

Evaluation corpora mimic human-annotated test sets: sentences pass through
the long-tailed single-edit channel, but a replacement that remains
contextually plausible is adopted as correct text instead of being labeled
an error.  Without that adoption step the long-tail-trained model would be
evaluated on its own training distribution, where it is asymptotically
calibrated by construction, and the calibration contrast under study would
vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .augment import (ConfusionConfig, ConfusionTable, CorruptionRecord,
                      PairCorpus, SampleCategory, concat_corpora, confusion_pair,
                      generate_corpus)
from .calibration import CalibrationReport, calibration_report
from .corrector import (MASKED_WINDOW, CorrectorConfig, CorrectorModel,
                        predict_at, train)
from .harness import CategoryRate, Metrics, category_filter_rates, evaluate
from .oracle import OracleScorer, restoration_distribution
from .world import WorldConfig, WorldModel, build_world, conditional

FILTER_SOURCES = ("cross", "self", "heuristic", "none", "mixing")
DEFAULT_THRESHOLDS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
DEFAULT_VOLUME_SIZES = (10**3, 10**4, 10**5)


@dataclass(frozen=True)
class FilterConfig:
    threshold: float = 0.2
    filter_source: str = "cross"
    lambda_n: float = 0.9
    lambda_m: float = 0.8
    literal_ratio: bool = False  # one-sided reading of the masked-logit rule

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ValueError("threshold must be in (0, 1)")
        if self.filter_source not in FILTER_SOURCES:
            raise ValueError(f"filter_source must be one of {FILTER_SOURCES}")
        if not (0.0 < self.lambda_n <= 1.0):
            raise ValueError("lambda_n must be in (0, 1]")
        if not (-1.0 <= self.lambda_m <= 1.0):
            raise ValueError("lambda_m must be in [-1, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a full experiment needs besides the seed."""

    world: WorldConfig = WorldConfig(vocab_size=20, support=3,
                                     weight_low=0.05, weight_high=1.0)
    confusion: ConfusionConfig = ConfusionConfig(candidates=3, head_mass=0.8,
                                                 context_affinity=0.6)
    corrector: CorrectorConfig = CorrectorConfig()
    filter: FilterConfig = FilterConfig()
    dr_sentences: int = 40_000
    do_sentences: int = 25_000
    eval_sentences: int = 3_000
    length_range: tuple[int, int] = (8, 16)
    rate: float = 0.1
    eval_clean_fraction: float = 0.5
    eval_plausibility: float = 0.12
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    volume_sizes: tuple[int, ...] = DEFAULT_VOLUME_SIZES


@dataclass(frozen=True)
class FilterResult:
    corpus: PairCorpus = field(repr=False)
    kept_edits: int
    reverted_edits: int


@dataclass(frozen=True)
class PipelineReport:
    variant: str
    threshold: float
    kept_edits: int
    reverted_edits: int
    category_rates: dict[SampleCategory, CategoryRate] | None
    metrics_before: Metrics
    metrics_after: Metrics
    calibration_before: CalibrationReport
    calibration_after: CalibrationReport
    filtered: PairCorpus | None = field(repr=False, default=None)


def filter_corpus(scorer, corpus: PairCorpus, threshold: float) -> FilterResult:
    """Revert every edit whose restore confidence falls below the threshold.

    The scorer is queried for the original token's probability at each edit
    position of the corrupted sentence.  Clean sides and unedited positions
    are never touched.
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must be in (0, 1)")
    places = [(ri, edit[0]) for ri, _, _, edit in corpus.iter_edits()]
    if not places:
        return FilterResult(corpus, 0, 0)

    if isinstance(scorer, CorrectorModel):
        probs = predict_at(scorer, corpus, places)
        originals = np.array([edit[1] for _, _, _, edit in corpus.iter_edits()])
        confidences = probs[np.arange(len(places)), originals]
    else:
        confidences = np.array([
            float(scorer.predict(corpus.records[ri].corrupted, pos)[edit[1]])
            for (ri, pos), (_, _, _, edit) in zip(places, corpus.iter_edits())
        ])

    keep = confidences >= threshold
    records = []
    k = 0
    kept = reverted = 0
    for rec in corpus.records:
        if not rec.edits:
            records.append(rec)
            continue
        decisions = keep[k:k + len(rec.edits)]
        k += len(rec.edits)
        if decisions.all():
            records.append(rec)
            kept += len(rec.edits)
            continue
        corrupted = list(rec.corrupted)
        new_edits = []
        new_cats = [] if rec.categories is not None else None
        for d, (edit, cat) in zip(decisions,
                                  zip(rec.edits, rec.categories or [None] * len(rec.edits))):
            i, x, y = edit
            if d:
                new_edits.append(edit)
                if new_cats is not None:
                    new_cats.append(cat)
                kept += 1
            else:
                corrupted[i] = x
                reverted += 1
        records.append(CorruptionRecord(
            rec.clean, tuple(corrupted), tuple(new_edits), rec.channel_rate,
            tuple(new_cats) if new_cats is not None else None))
    filtered = PairCorpus(tuple(records), corpus.vocab_size, corpus.rate, corpus.mode)
    return FilterResult(filtered, kept, reverted)


def _revert_edit_set(corpus: PairCorpus, flagged: set[tuple[int, int]]) -> FilterResult:
    records = []
    kept = reverted = 0
    for ri, rec in enumerate(corpus.records):
        hits = [k for k, (i, _, _) in enumerate(rec.edits) if (ri, i) in flagged]
        if not hits:
            records.append(rec)
            kept += len(rec.edits)
            continue
        corrupted = list(rec.corrupted)
        new_edits = []
        new_cats = [] if rec.categories is not None else None
        for k, edit in enumerate(rec.edits):
            i, x, y = edit
            if k in hits:
                corrupted[i] = x
                reverted += 1
            else:
                new_edits.append(edit)
                if new_cats is not None:
                    new_cats.append(rec.categories[k])
                kept += 1
        records.append(CorruptionRecord(
            rec.clean, tuple(corrupted), tuple(new_edits), rec.channel_rate,
            tuple(new_cats) if new_cats is not None else None))
    return FilterResult(PairCorpus(tuple(records), corpus.vocab_size, corpus.rate,
                                   corpus.mode), kept, reverted)


def _masked_scores(context_model: CorrectorModel, corpus: PairCorpus,
                   places: list[tuple[int, int]]) -> np.ndarray:
    # Log-scaled masked scores: the count model's analogue of mask logits.
    # Ratios are taken on this compressed scale, where a 0.9 cutoff tolerates
    # roughly a factor-two difference in conditional mass between two tokens
    # that are both well attested, as a logit-ratio rule does.
    probs = predict_at(context_model, corpus, places)
    floor = probs.min(axis=1, keepdims=True)
    return np.log1p(probs / floor - 1.0)


def heuristic_noisy(corpus: PairCorpus, context_model: CorrectorModel,
                    lambda_n: float = 0.9, literal_ratio: bool = False) -> set[tuple[int, int]]:
    """Flag edits whose original and replacement both fit the masked context.

    The context model scores each edit position from its neighbors alone,
    on a log scale.  By default an edit is flagged when the smaller of the
    two scores is at least ``lambda_n`` times the larger; ``literal_ratio``
    switches to the one-sided reading (original's score at most ``lambda_n``
    times the replacement's).  Returns (record_index, position) pairs.
    """
    places = [(ri, edit[0]) for ri, _, _, edit in corpus.iter_edits()]
    if not places:
        return set()
    scores = _masked_scores(context_model, corpus, places)
    flagged = set()
    for row, (ri, _, _, (i, x, y)) in zip(scores, corpus.iter_edits()):
        q_x, q_y = float(row[x]), float(row[y])
        if literal_ratio:
            hit = q_y > 0 and (q_x / q_y) <= lambda_n
        else:
            top = max(q_x, q_y)
            hit = top > 0 and (min(q_x, q_y) / top) >= lambda_n
        if hit:
            flagged.add((ri, i))
    return flagged


def heuristic_multi(corpus: PairCorpus, context_model: CorrectorModel,
                    lambda_m: float = 0.8,
                    flagged_noisy: set[tuple[int, int]] | None = None) -> set[tuple[int, int]]:
    """Flag edit pairs sharing a misspelling with near-identical contexts.

    Two edits with the same replacement token but different originals are
    both flagged when the cosine similarity of their masked context
    distributions reaches ``lambda_m``.  Edits already flagged as noisy are
    removed from the result.
    """
    edits = list(corpus.iter_edits())
    places = [(ri, edit[0]) for ri, _, _, edit in edits]
    if not places:
        return set()
    probs = predict_at(context_model, corpus, places)
    norms = np.linalg.norm(probs, axis=1, keepdims=True)
    unit = probs / np.where(norms == 0.0, 1.0, norms)

    by_replacement: dict[int, list[int]] = {}
    for k, (_, _, _, (_, _, y)) in enumerate(edits):
        by_replacement.setdefault(y, []).append(k)

    flagged: set[tuple[int, int]] = set()
    for members in by_replacement.values():
        if len(members) < 2:
            continue
        originals = np.array([edits[k][3][1] for k in members])
        block = unit[members]
        sims = block @ block.T
        hit = (sims >= lambda_m) & (originals[:, None] != originals[None, :])
        for a in np.flatnonzero(hit.any(axis=1)):
            k = members[int(a)]
            ri, _, _, (i, _, _) = edits[k]
            flagged.add((ri, i))
    if flagged_noisy:
        flagged -= flagged_noisy
    return flagged


def make_eval_corpus(world: WorldModel, table: ConfusionTable, n_sentences: int,
                     length_range: tuple[int, int] = (8, 16), rate: float = 0.1,
                     seed: int = 0, clean_fraction: float = 0.5,
                     plausibility: float = 0.1, stream: str = "eval") -> PairCorpus:
    """Human-judged evaluation corpus over the given channel.

    Single-edit corruption, except that a replacement whose contextual
    probability is within ``plausibility`` of the original's is adopted as
    correct text (the sentence keeps the replacement and carries no error),
    the way an annotator treats a plausible alternative as not an error.
    """
    corpus = generate_corpus(world, table, n_sentences, length_range, rate,
                             mode="single_edit", seed=seed,
                             clean_fraction=clean_fraction, annotate=True,
                             stream=stream)
    records = []
    for rec in corpus.records:
        if not rec.edits:
            records.append(rec)
            continue
        i, x, y = rec.edits[0]
        prior = conditional(world, rec.clean, i)
        if prior[y] >= plausibility * prior[x]:
            records.append(CorruptionRecord(rec.corrupted, rec.corrupted, (), rate))
        else:
            records.append(rec)
    return PairCorpus(tuple(records), corpus.vocab_size, rate, "single_edit")


def tv_to_oracle(model, world: WorldModel, table: ConfusionTable,
                 corpus: PairCorpus, rate: float) -> float:
    """Mean total-variation distance between model and exact restore posteriors.

    Measured at the edit positions of single-edit records.
    """
    distances = []
    for ri, rec, _, (i, _, _) in corpus.iter_edits():
        if len(rec.edits) != 1:
            continue
        exact = restoration_distribution(world, table, rec.corrupted, i, rate)
        approx = model.predict(rec.corrupted, i)
        distances.append(0.5 * float(np.abs(exact - approx).sum()))
    if not distances:
        raise ValueError("corpus has no single-edit records to compare on")
    return float(np.mean(distances))


def build_experiment_world(config: ExperimentConfig, seed: int):
    """World plus uniform/long-tailed table pair for one experiment seed."""
    world = build_world(replace(config.world, seed=seed))
    uniform, longtail = confusion_pair(world, replace(config.confusion, seed=seed))
    return world, uniform, longtail


def _corpora_for(world, uniform, longtail, config: ExperimentConfig, seed: int):
    d_r = generate_corpus(world, uniform, config.dr_sentences, config.length_range,
                          config.rate, mode="iid", seed=seed, stream="d-r")
    d_o = generate_corpus(world, longtail, config.do_sentences, config.length_range,
                          config.rate, mode="iid", seed=seed, annotate=True,
                          stream="d-o")
    eval_corpus = make_eval_corpus(world, longtail, config.eval_sentences,
                                   config.length_range, config.rate, seed=seed,
                                   clean_fraction=config.eval_clean_fraction,
                                   plausibility=config.eval_plausibility)
    return d_r, d_o, eval_corpus


def mixing_baseline(d_r: PairCorpus, d_o: PairCorpus,
                    corrector_config: CorrectorConfig = CorrectorConfig()) -> CorrectorModel:
    """Model trained on the plain concatenation of the two corpora."""
    if len(d_r) == 0 or len(d_o) == 0:
        raise ValueError("mixing needs two non-empty corpora")
    return train(concat_corpora(d_r, d_o), corrector_config.window,
                 corrector_config.alpha)


def run_pipeline(world: WorldModel, uniform_table: ConfusionTable,
                 longtail_table: ConfusionTable, config: ExperimentConfig,
                 seed: int = 0) -> PipelineReport:
    """Execute one full train-filter-retrain run and evaluate it.

    The unfiltered baseline is always trained and evaluated alongside the
    selected variant so every report carries a before/after comparison on
    the same evaluation corpus.
    """
    fc = config.filter
    cc = config.corrector
    d_r, d_o, eval_corpus = _corpora_for(world, uniform_table, longtail_table,
                                         config, seed)

    baseline = train(d_o, cc.window, cc.alpha)
    metrics_before = evaluate(baseline, eval_corpus)
    calib_before = calibration_report(baseline, eval_corpus)

    variant = fc.filter_source
    rates = None
    if variant == "none":
        result = FilterResult(d_o, d_o.n_edits, 0)
        final = baseline
    elif variant == "mixing":
        result = FilterResult(d_o, d_o.n_edits, 0)
        final = mixing_baseline(d_r, d_o, cc)
    elif variant in ("cross", "self"):
        source = d_r if variant == "cross" else d_o
        filter_model = train(source, cc.window, cc.alpha)
        result = filter_corpus(filter_model, d_o, fc.threshold)
        final = train(result.corpus, cc.window, cc.alpha)
        rates = category_filter_rates(d_o, result.corpus)
    elif variant == "heuristic":
        context_model = train(d_r, MASKED_WINDOW, cc.alpha)
        flagged = heuristic_noisy(d_o, context_model, fc.lambda_n, fc.literal_ratio)
        result = _revert_edit_set(d_o, flagged)
        final = train(result.corpus, cc.window, cc.alpha)
        rates = category_filter_rates(d_o, result.corpus)
    else:  # pragma: no cover - guarded by FilterConfig
        raise ValueError(f"unknown variant {variant}")

    metrics_after = evaluate(final, eval_corpus) if variant != "none" else metrics_before
    calib_after = (calibration_report(final, eval_corpus)
                   if variant != "none" else calib_before)
    return PipelineReport(variant, fc.threshold, result.kept_edits,
                          result.reverted_edits, rates, metrics_before,
                          metrics_after, calib_before, calib_after, result.corpus)


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    metrics: Metrics
    ece: float
    kept_edits: int
    reverted_edits: int


def threshold_sweep(world: WorldModel, uniform_table: ConfusionTable,
                    longtail_table: ConfusionTable, config: ExperimentConfig,
                    thresholds: tuple[float, ...] | None = None,
                    seed: int = 0) -> list[SweepPoint]:
    """One filtered run per threshold, sharing the trained filter model."""
    grid = tuple(thresholds if thresholds is not None else config.thresholds)
    if not grid:
        raise ValueError("threshold grid is empty")
    for p in grid:
        if not (0.0 < p < 1.0):
            raise ValueError(f"threshold {p} outside (0, 1)")

    cc = config.corrector
    d_r, d_o, eval_corpus = _corpora_for(world, uniform_table, longtail_table,
                                         config, seed)
    filter_model = train(d_r, cc.window, cc.alpha)
    points = []
    for p in grid:
        result = filter_corpus(filter_model, d_o, p)
        final = train(result.corpus, cc.window, cc.alpha)
        metrics = evaluate(final, eval_corpus)
        calib = calibration_report(final, eval_corpus)
        points.append(SweepPoint(p, metrics, calib.ece, result.kept_edits,
                                 result.reverted_edits))
    return points


@dataclass(frozen=True)
class VolumePoint:
    size_chars: int
    metrics: Metrics
    tv_distance: float
    ece: float


def volume_sweep(world: WorldModel, uniform_table: ConfusionTable,
                 longtail_table: ConfusionTable, config: ExperimentConfig,
                 sizes: tuple[int, ...] | None = None, seed: int = 0,
                 threshold: float = 1e-2) -> list[VolumePoint]:
    """Grow the filter-training corpus along a character-count ladder.

    The target corpus, evaluation corpus, and comparison corpus are shared
    across ladder steps; only the filter model's training volume changes.
    """
    ladder = tuple(sizes if sizes is not None else config.volume_sizes)
    if list(ladder) != sorted(ladder):
        raise ValueError("sizes must be ascending")
    cc = config.corrector
    mean_len = 0.5 * (config.length_range[0] + config.length_range[1])

    d_o = generate_corpus(world, longtail_table, config.do_sentences,
                          config.length_range, config.rate, mode="iid",
                          seed=seed, annotate=True, stream="d-o")
    eval_corpus = make_eval_corpus(world, longtail_table, config.eval_sentences,
                                   config.length_range, config.rate, seed=seed,
                                   clean_fraction=config.eval_clean_fraction,
                                   plausibility=config.eval_plausibility)
    tv_corpus = generate_corpus(world, longtail_table,
                                max(200, config.eval_sentences // 5),
                                config.length_range, config.rate,
                                mode="single_edit", seed=seed, stream="tv")

    points = []
    for size in ladder:
        n_sentences = max(1, int(round(size / mean_len)))
        d_r = generate_corpus(world, uniform_table, n_sentences,
                              config.length_range, config.rate, mode="iid",
                              seed=seed, stream=f"d-r-{size}")
        filter_model = train(d_r, cc.window, cc.alpha)
        tv = tv_to_oracle(filter_model, world, uniform_table, tv_corpus, config.rate)
        result = filter_corpus(filter_model, d_o, threshold)
        final = train(result.corpus, cc.window, cc.alpha)
        metrics = evaluate(final, eval_corpus)
        calib = calibration_report(final, eval_corpus)
        points.append(VolumePoint(int(size), metrics, tv, calib.ece))
    return points


def oracle_filter(world: WorldModel, table: ConfusionTable, corpus: PairCorpus,
                  threshold: float, rate: float | None = None) -> FilterResult:
    """Filtering with the exact posterior in place of a trained model."""
    scorer = OracleScorer(world, table, rate if rate is not None else corpus.rate)
    return filter_corpus(scorer, corpus, threshold)
