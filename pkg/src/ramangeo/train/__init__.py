from .loop import (
    CrossValidationResult,
    Evaluation,
    TrainConfig,
    TrainingDivergedError,
    TrainResult,
    cross_validate,
    evaluate,
    history_jsonl,
    report_for,
    train,
)
from .optim import (
    OPTIMIZERS,
    OptimConfig,
    OptimizerError,
    OptimizerState,
    clip_grad_norm,
    global_grad_norm,
    optimizer_step,
)
from .split import (
    EmptyDatasetError,
    FoldAssignment,
    SplitError,
    filter_rare_classes,
    stratified_kfold,
    stratified_split,
)

__all__ = [
    "CrossValidationResult",
    "EmptyDatasetError",
    "Evaluation",
    "FoldAssignment",
    "OPTIMIZERS",
    "OptimConfig",
    "OptimizerError",
    "OptimizerState",
    "SplitError",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "clip_grad_norm",
    "cross_validate",
    "evaluate",
    "filter_rare_classes",
    "global_grad_norm",
    "history_jsonl",
    "optimizer_step",
    "report_for",
    "stratified_kfold",
    "stratified_split",
    "train",
]
