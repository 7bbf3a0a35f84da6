"""Surrogate-gradient trainer for differential-time spiking models.

Trains a ternary encoding kernel jointly with dense LIF layer weights,
then quantizes and exports the result as a .lsnn file for the dtsnn
inference engine.
"""

from .data import Dataset, DatasetError, load_digits_dataset, load_idx_dataset
from .export import ExportOverflowError, ExportReport, model_bytes, quantize_and_export
from .network import ConfigError, SpikingNet, TrainConfig, TrainedParams, evaluate
from .train import TrainingDivergedError, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Dataset",
    "DatasetError",
    "ExportOverflowError",
    "ExportReport",
    "SpikingNet",
    "TrainConfig",
    "TrainedParams",
    "TrainingDivergedError",
    "evaluate",
    "load_digits_dataset",
    "load_idx_dataset",
    "model_bytes",
    "quantize_and_export",
    "train",
    "__version__",
]
