"""Spatio-temporal graph transfer learning for node x time series classification."""

from .config import ConfigError, ExperimentConfig
from .data import (
    DatasetError,
    SyntheticConfig,
    TimeSeriesDataset,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .estimator import ConnectivityFeatures, TransferClassifier
from .evaluation import auc, cross_validate, importance_property_analysis
from .graph import ConnectivityGraph, nodal_properties, normalize_adjacency, pearson_connectivity
from .model import ModelConfig, ModelParameters, init_parameters, load_checkpoint, node_importance, save_checkpoint
from .training import STRATEGIES, TrainConfig, TrainResult, run_strategy

__all__ = [
    "ConfigError",
    "ConnectivityFeatures",
    "ConnectivityGraph",
    "DatasetError",
    "ExperimentConfig",
    "ModelConfig",
    "ModelParameters",
    "STRATEGIES",
    "SyntheticConfig",
    "TimeSeriesDataset",
    "TrainConfig",
    "TrainResult",
    "TransferClassifier",
    "auc",
    "cross_validate",
    "generate_synthetic",
    "importance_property_analysis",
    "init_parameters",
    "load_checkpoint",
    "load_dataset",
    "nodal_properties",
    "node_importance",
    "normalize_adjacency",
    "pearson_connectivity",
    "run_strategy",
    "save_checkpoint",
    "save_dataset",
]
