"""Config file loading and canonical serialization.

Experiment configs are plain nested dataclasses; the JSON form mirrors the
dataclass structure section by section.  Unknown keys are rejected so typos
fail loudly, and the canonical dict form feeds the manifest's config hash.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .augment import ConfusionConfig
from .corrector import CorrectorConfig
from .pipeline import ExperimentConfig, FilterConfig
from .world import WorldConfig

_SECTIONS = {
    "world": WorldConfig,
    "confusion": ConfusionConfig,
    "corrector": CorrectorConfig,
    "filter": FilterConfig,
}

_TUPLE_FIELDS = {"window", "length_range", "thresholds", "volume_sizes"}


def _build_section(cls, doc: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {k: tuple(v) if k in _TUPLE_FIELDS and v is not None else v
              for k, v in doc.items()}
    return cls(**kwargs)


def experiment_config_from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    kwargs = {}
    for section, cls in _SECTIONS.items():
        if section in doc:
            kwargs[section] = _build_section(cls, doc.pop(section))
    top_names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(doc) - top_names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for k, v in doc.items():
        kwargs[k] = tuple(v) if k in _TUPLE_FIELDS and v is not None else v
    return ExperimentConfig(**kwargs)


def experiment_config_to_dict(config: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(config)
    for key in _TUPLE_FIELDS:
        for holder in [doc] + [doc[s] for s in _SECTIONS if s in doc]:
            if key in holder and isinstance(holder[key], tuple):
                holder[key] = list(holder[key])
    return doc


def load_experiment_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return experiment_config_from_dict(json.loads(Path(path).read_text()))
