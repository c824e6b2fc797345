"""Synthetic-task experiment harness."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, config_hash, load_config
from .data import Dataset, Split, SyntheticSpec, gen_synthetic
from .metrics import MetricsRow, mean_average_precision, top1_accuracy
from .model import BimodalNet
from .training import NumericalAbort, TrainResult, evaluate, evaluate_model, fit_model, train

__all__ = [
    "BimodalNet", "Checkpoint", "ConfigError", "Dataset", "ExperimentConfig", "MetricsRow",
    "NumericalAbort", "Split", "SyntheticSpec", "TrainResult", "config_hash", "evaluate",
    "evaluate_model", "fit_model", "gen_synthetic", "load_checkpoint", "load_config",
    "mean_average_precision", "save_checkpoint", "top1_accuracy", "train",
]
