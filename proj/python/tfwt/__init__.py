"""Feature weighting: transformer weighter, PPO fine-tuning, baselines."""

import json

from . import _tfwt
from ._tfwt import (
    ConfigError,
    DataError,
    NumericError,
    TfwtError,
    TrainingError,
    clipped_surrogate,
    mutual_information,
    rdd,
    synthetic,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "TfwtError",
    "TrainingError",
    "clipped_surrogate",
    "default_config",
    "evaluate",
    "finetune",
    "mutual_information",
    "normalize_config",
    "rdd",
    "score",
    "synthetic",
    "train",
]


def _dump(config):
    return config if isinstance(config, str) else json.dumps(config)


def default_config():
    return json.loads(_tfwt.default_config())


def normalize_config(config):
    """Fill defaults and validate; raises ConfigError on unknown or bad fields."""
    return json.loads(_tfwt.normalize_config(_dump(config)))


def train(config):
    """Train one weighter per seed; writes checkpoints into output_dir. Returns the log text."""
    return _tfwt.train(_dump(config))


def finetune(config, checkpoints=()):
    log, warnings = _tfwt.finetune(_dump(config), [str(c) for c in checkpoints])
    return log, warnings


def evaluate(config):
    """Evaluate every method and model; returns the metrics document."""
    return json.loads(_tfwt.evaluate(_dump(config)))


def score(config, weights=None):
    return json.loads(_tfwt.score(_dump(config), None if weights is None else str(weights)))
