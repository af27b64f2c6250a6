"""Learnability of measurement-induced entanglement from measurement records.

Simulates random circuits, collects classical-shadow-labelled measurement
records, trains a transformer density-matrix estimator on them, and measures
the uncertainty metric Delta together with exact small-system oracles.
"""

__version__ = "0.1.0"

from .circuits import CircuitSpec  # noqa: F401
from .model import ModelConfig, preset_config  # noqa: F401
from .training import TrainConfig  # noqa: F401
