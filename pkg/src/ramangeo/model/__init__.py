from .checkpoint import (
    CheckpointChecksumError,
    CheckpointError,
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    load_checkpoint,
    save_checkpoint,
)
from .convnext import (
    ConfigError,
    Model,
    ModelConfig,
    count_params,
    forward,
    forward_block,
    forward_features,
    init_model,
    predict_proba,
)

__all__ = [
    "CheckpointChecksumError",
    "CheckpointError",
    "CheckpointFormatError",
    "CheckpointTruncatedError",
    "CheckpointVersionError",
    "ConfigError",
    "Model",
    "ModelConfig",
    "count_params",
    "forward",
    "forward_block",
    "forward_features",
    "init_model",
    "load_checkpoint",
    "predict_proba",
    "save_checkpoint",
]
