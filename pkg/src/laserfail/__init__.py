"""Laser failure-mode detection: synthetic degradation data, a numpy LSTM
classifier, classical baselines and an evaluation suite."""

from .degradation import DegradationMode, GenerationConfig, LaserParams, generate_dataset
from .neural import LstmNetwork, NetworkConfig, TrainingConfig
from .pipeline import PartialFailureSpec, SplitDataset, prepare

__all__ = [
    "DegradationMode",
    "GenerationConfig",
    "LaserParams",
    "LstmNetwork",
    "NetworkConfig",
    "PartialFailureSpec",
    "SplitDataset",
    "TrainingConfig",
    "generate_dataset",
    "prepare",
]

__version__ = "0.1.0"
