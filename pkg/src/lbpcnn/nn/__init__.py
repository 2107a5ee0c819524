from .config import ConfigError, LayerSpec, ModelConfig, load_model_config, parse_model_config, preset
from .model import (
    Decision,
    Model,
    ShapeError,
    build_model,
    extract_activations,
    predict,
    predict_batch,
    transfer_modify,
)
from .persist import WeightsFormatError, WeightsShapeError, load_weights, save_weights
from .train import TrainConfig, TrainingError, sgdm_step, train

__all__ = [
    "ConfigError",
    "Decision",
    "LayerSpec",
    "Model",
    "ModelConfig",
    "ShapeError",
    "TrainConfig",
    "TrainingError",
    "WeightsFormatError",
    "WeightsShapeError",
    "build_model",
    "extract_activations",
    "load_model_config",
    "load_weights",
    "parse_model_config",
    "predict",
    "predict_batch",
    "preset",
    "save_weights",
    "sgdm_step",
    "train",
    "transfer_modify",
]
