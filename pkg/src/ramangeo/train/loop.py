"""Training loop, holdout evaluation, and k-fold cross-validation."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..autodiff import Tensor, backward, debug_enabled
from ..autodiff import functional as F
from ..eval.metrics import FoldAggregate, MetricsReport, aggregate_folds, confusion_matrix, per_class_metrics
from ..model import Model, ModelConfig, init_model
from ..model.convnext import ConfigError, forward
from .optim import OPTIMIZERS, OptimConfig, OptimizerState, clip_grad_norm, global_grad_norm, optimizer_step
from .split import FoldAssignment, stratified_kfold

log = logging.getLogger(__name__)

DTYPES = {"float32": np.float32, "float64": np.float64}


class TrainingDivergedError(FloatingPointError):
    """Non-finite loss; carries enough context to diagnose the blow-up."""

    def __init__(self, epoch: int, batch: int, loss: float, param_norms: dict[str, float], fold=None):
        self.epoch, self.batch, self.loss, self.param_norms, self.fold = epoch, batch, loss, param_norms, fold
        super().__init__(f"non-finite loss {loss} at fold {fold}, epoch {epoch}, batch {batch}")

    def diagnostics(self) -> dict:
        return {
            "fold": self.fold,
            "epoch": self.epoch,
            "batch": self.batch,
            "loss": repr(self.loss),
            "param_norms": self.param_norms,
        }


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.35
    folds: int = 5
    holdout_fraction: float = 0.2
    batch_size: int = 64
    epochs: int = 100
    clip_norm: float = 1.0
    seed: int = 0
    optimizer: str = "schedule_free_adamw"
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    dtype: str = "float32"
    min_class_count: int = 2
    record_wall_time: bool = True

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)

    def validate(self) -> None:
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError(f"holdout_fraction must lie in (0, 1), got {self.holdout_fraction}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigError(f"betas must be two values in [0, 1), got {self.betas}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}, got {self.dtype!r}")

    def optim(self) -> OptimConfig:
        return OptimConfig(self.optimizer, self.learning_rate, self.weight_decay, self.betas, self.eps)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainResult:
    model: Model  # evaluation weights (the averaged iterate for schedule-free)
    history: list[dict]
    state: OptimizerState
    live_params: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


@dataclass
class Evaluation:
    loss: float
    predictions: np.ndarray
    probabilities: np.ndarray

    def accuracy(self, targets) -> float:
        return float(np.mean(self.predictions == np.asarray(targets)))


def _as_batch(X: np.ndarray, dtype) -> np.ndarray:
    return np.ascontiguousarray(X, dtype=dtype)[:, None, :]


def evaluate(model: Model, X: np.ndarray, y: np.ndarray | None = None, batch_size: int = 256) -> Evaluation:
    """Inference-mode forward over ``X``; ``loss`` is NaN when ``y`` is None."""
    logits = []
    for s in range(0, len(X), batch_size):
        logits.append(forward(model, _as_batch(X[s : s + batch_size], model.dtype)).data.astype(np.float64))
    z = np.concatenate(logits) if logits else np.zeros((0, model.config.num_classes))
    logp = F.log_softmax(z)
    loss = float("nan")
    if y is not None and len(z):
        loss = float(-np.mean(logp[np.arange(len(z)), np.asarray(y)]))
    return Evaluation(loss, np.argmax(z, axis=1), np.exp(logp))


def _model_with(model: Model, arrays: Mapping[str, np.ndarray]) -> Model:
    params = {n: Tensor(arrays[n].copy(), requires_grad=True, name=n) for n in model.params}
    return Model(dataclasses.replace(model.config), params, list(model.labels), dict(model.metadata))


def _check_inputs(model_config: ModelConfig, X: np.ndarray, y: np.ndarray, labels: Sequence[str]) -> None:
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"expected X of shape (N, G) matching y, got {X.shape} and {y.shape}")
    if len(X) == 0:
        raise ValueError("empty training set")
    if X.shape[1] != model_config.input_length:
        raise ConfigError(f"dataset grid size {X.shape[1]} != model input_length {model_config.input_length}")
    if len(labels) != model_config.num_classes:
        raise ConfigError(f"{len(labels)} labels for num_classes={model_config.num_classes}")
    if y.min() < 0 or y.max() >= len(labels):
        raise ValueError("class index out of range")


def train(
    model_config: ModelConfig,
    cfg: TrainConfig,
    X: np.ndarray,
    y: np.ndarray,
    labels: Sequence[str],
    validation: tuple[np.ndarray, np.ndarray] | None = None,
    fold: int | None = None,
    on_epoch: Callable[[dict], None] | None = None,
    init_seed: int | None = None,
) -> TrainResult:
    """Minimize mean softmax cross-entropy with clipping and the configured optimizer.

    Every epoch appends ``{fold, epoch, train_loss, val_loss, val_accuracy,
    wall_ms}`` to the history; validation uses the evaluation weights.
    """
    cfg.validate()
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    _check_inputs(model_config, X, y, labels)
    dtype = DTYPES[cfg.dtype]
    seeds = np.random.SeedSequence([cfg.seed, 0 if fold is None else fold + 1])
    model_seed, data_seed = (int(s) for s in seeds.generate_state(2))
    model = init_model(model_config, model_seed if init_seed is None else init_seed, list(labels), dtype=dtype)
    rng = np.random.default_rng(data_seed)
    live = {n: t.data for n, t in model.params.items()}
    state = OptimizerState(cfg.optimizer).initialize(live)
    optim = cfg.optim()
    mask = model.decay_mask()
    batches = _as_batch(X, dtype)
    history: list[dict] = []

    def eval_model() -> Model:
        return _model_with(model, state.eval_params(live))

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(X))
        total, seen = 0.0, 0
        for b, s in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[s : s + cfg.batch_size]
            model.zero_grad()
            logits = forward(model, batches[idx], training=True, rng=rng)
            loss = F.softmax_cross_entropy(logits, y[idx])
            value = loss.item()
            if not np.isfinite(value):
                norms = {n: float(np.linalg.norm(p)) for n, p in live.items()}
                raise TrainingDivergedError(epoch, b, value, norms, fold)
            backward(loss)
            grads = {n: t.grad if t.grad is not None else np.zeros_like(t.data) for n, t in model.params.items()}
            grads = clip_grad_norm(grads, cfg.clip_norm)
            if debug_enabled():
                assert global_grad_norm(grads) <= cfg.clip_norm * (1 + 1e-6)
            optimizer_step(state, live, grads, optim, mask)
            total += value * len(idx)
            seen += len(idx)
        rec = {"fold": fold, "epoch": epoch, "train_loss": total / seen, "val_loss": None, "val_accuracy": None}
        if validation is not None:
            ev = evaluate(eval_model(), validation[0], validation[1])
            rec["val_loss"], rec["val_accuracy"] = ev.loss, ev.accuracy(validation[1])
        rec["wall_ms"] = round((time.perf_counter() - t0) * 1000.0, 3) if cfg.record_wall_time else None
        history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        log.info("fold %s epoch %d train_loss %.5f val_acc %s", fold, epoch, rec["train_loss"], rec["val_accuracy"])
    final = eval_model()
    final.metadata.update({"train_config": cfg.to_dict(), "fold": fold, "steps": state.step})
    return TrainResult(final, history, state, {n: p.copy() for n, p in live.items()})


def history_jsonl(history: Sequence[dict]) -> str:
    return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in history)


def report_for(model: Model, X: np.ndarray, y: np.ndarray, fold: int | None = None) -> MetricsReport:
    ev = evaluate(model, X, y)
    cm = confusion_matrix(ev.predictions, y, model.labels)
    return per_class_metrics(cm, fold=fold, loss=ev.loss)


@dataclass
class CrossValidationResult:
    assignment: FoldAssignment
    reports: list[MetricsReport]
    aggregate: FoldAggregate
    results: list[TrainResult]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([r.accuracy for r in self.reports]))


def cross_validate(
    model_config: ModelConfig,
    cfg: TrainConfig,
    X: np.ndarray,
    y: np.ndarray,
    labels: Sequence[str],
    on_epoch: Callable[[dict], None] | None = None,
) -> CrossValidationResult:
    """Train ``cfg.folds`` fresh models, each validated on one stratified fold."""
    cfg.validate()
    y = np.asarray(y, dtype=np.int64)
    assignment = stratified_kfold(y, cfg.folds, cfg.seed)
    reports, results = [], []
    for k in range(cfg.folds):
        tr, va = assignment.train_indices(k), assignment.validation_indices(k)
        res = train(model_config, cfg, X[tr], y[tr], labels, validation=(X[va], y[va]), fold=k, on_epoch=on_epoch)
        results.append(res)
        reports.append(report_for(res.model, X[va], y[va], fold=k))
    return CrossValidationResult(assignment, reports, aggregate_folds(reports), results)
