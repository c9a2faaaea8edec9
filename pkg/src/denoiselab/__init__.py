"""Desk-scale laboratory for confidence-based corpus denoising.

Builds a fully enumerable synthetic token language, corrupts it through
uniform and long-tailed replacement channels, computes exact Bayesian
restore confidences for every planted error, trains count-based correctors,
and runs the train-filter-retrain pipeline with calibration diagnostics.
"""

from .augment import (ConfusionConfig, ConfusionTable, CorruptionRecord,
                      PairCorpus, SampleCategory, build_confusion, categorize,
                      corrupt, generate_corpus)
from .calibration import (CalibrationReport, PredictionOutcome, collect_outcomes,
                          ece, filter_easy_positives)
from .corrector import CorrectorConfig, CorrectorModel, ce_loss, correct, merge, predict, train
from .harness import Metrics, category_filter_rates, emit_report, evaluate
from .oracle import (OracleScorer, PosteriorReport, bounds, brute_force_posterior,
                     case_confidence, posterior, restoration_distribution,
                     verify_ordering)
from .pipeline import (ExperimentConfig, FilterConfig, PipelineReport,
                       filter_corpus, heuristic_multi, heuristic_noisy,
                       make_eval_corpus, mixing_baseline, run_pipeline,
                       threshold_sweep, volume_sweep)
from .world import (ImpossibleContextError, WorldConfig, WorldModel, build_world,
                    conditional, sample_sentence, sentence_prob)

__version__ = "0.1.0"
