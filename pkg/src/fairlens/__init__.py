"""Identify and mitigate classifier bias in feature and label embedding spaces."""

from .bias import BiasProfile, BiasRemover, bias_direction, profile_model, remove_bias
from .datagen import Dataset, GenConfig, generate_extreme_bias, generate_synthetic, split
from .estimators import BaselineClassifier, ProtectedEmbeddingClassifier
from .experiment import ExperimentConfig, load_config, preset_config, preset_names, run_experiment
from .model import ClassifierModel, EncoderSpec, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BaselineClassifier",
    "ExperimentConfig",
    "ProtectedEmbeddingClassifier",
    "BiasProfile",
    "BiasRemover",
    "ClassifierModel",
    "Dataset",
    "EncoderSpec",
    "GenConfig",
    "TrainConfig",
    "bias_direction",
    "generate_extreme_bias",
    "generate_synthetic",
    "load_config",
    "preset_config",
    "preset_names",
    "profile_model",
    "remove_bias",
    "run_experiment",
    "split",
    "train",
]
