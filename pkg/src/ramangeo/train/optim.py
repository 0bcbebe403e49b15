"""Gradient clipping, AdamW, and schedule-free AdamW.

Schedule-free AdamW keeps two iterates per parameter: the base sequence
``z`` that takes Adam-normalized steps, and ``x``, a uniform running
average of ``z``. Gradients are taken at ``y = (1 - b1) z + b1 x``, which is
what the live parameters hold during training; ``x`` is used for
evaluation and checkpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

OPTIMIZERS = ("schedule_free_adamw", "adamw")


class OptimizerError(RuntimeError):
    pass


@dataclass
class OptimConfig:
    kind: str = "schedule_free_adamw"
    learning_rate: float = 1e-3
    weight_decay: float = 0.35
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    average: bool = True  # schedule-free only; False pins x to z


def global_grad_norm(grads) -> float:
    arrays = grads.values() if isinstance(grads, Mapping) else grads
    return math.sqrt(sum(float(np.vdot(g, g)) for g in arrays))


def clip_grad_norm(grads, max_norm: float):
    """Scale all gradients by ``max_norm / norm`` when the global L2 norm exceeds it.

    Accepts a mapping or a sequence of arrays and returns the same kind.
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_grad_norm(grads)
    scale = max_norm / norm if norm > max_norm else 1.0
    if isinstance(grads, Mapping):
        return {n: g * scale if scale != 1.0 else g for n, g in grads.items()}
    return [g * scale if scale != 1.0 else g for g in grads]


@dataclass
class OptimizerState:
    kind: str
    step: int = 0
    v: dict[str, np.ndarray] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)  # adamw
    x: dict[str, np.ndarray] = field(default_factory=dict)  # schedule-free average
    z: dict[str, np.ndarray] = field(default_factory=dict)  # schedule-free base
    initialized: bool = False

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise OptimizerError(f"unknown optimizer {self.kind!r}; expected one of {OPTIMIZERS}")

    def initialize(self, params: Mapping[str, np.ndarray]) -> "OptimizerState":
        for n, p in params.items():
            self.v[n] = np.zeros_like(p)
            if self.kind == "adamw":
                self.m[n] = np.zeros_like(p)
            else:
                self.x[n] = p.copy()
                self.z[n] = p.copy()
        self.initialized = True
        return self

    def eval_params(self, params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Parameters to evaluate with: ``x`` for schedule-free, the live values otherwise."""
        if self.kind == "schedule_free_adamw" and self.initialized:
            return {n: self.x[n].copy() for n in params}
        return {n: p.copy() for n, p in params.items()}


def optimizer_step(
    state: OptimizerState,
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    cfg: OptimConfig,
    decay_mask: Mapping[str, bool] | None = None,
) -> None:
    """Update ``params`` in place (and the state) from ``grads``.

    Weight decay is decoupled and only applies where ``decay_mask`` is true
    (everywhere when no mask is given).
    """
    if not state.initialized:
        raise OptimizerError("optimizer state used before initialize()")
    if cfg.kind != state.kind:
        raise OptimizerError(f"state is for {state.kind}, config asks for {cfg.kind}")
    if set(grads) != set(params):
        raise OptimizerError("gradients and parameters have different names")
    for n, p in params.items():
        if grads[n].shape != p.shape:
            raise OptimizerError(f"{n}: gradient shape {grads[n].shape} != parameter shape {p.shape}")
    state.step += 1
    t = state.step
    lr, b1, b2, eps = cfg.learning_rate, cfg.betas[0], cfg.betas[1], cfg.eps
    bc2 = 1.0 - b2**t
    for n, p in params.items():
        g = grads[n]
        wd = cfg.weight_decay if decay_mask is None or decay_mask.get(n, True) else 0.0
        v = state.v[n]
        v *= b2
        v += (1.0 - b2) * g * g
        denom = np.sqrt(v / bc2) + eps
        if state.kind == "adamw":
            m = state.m[n]
            m *= b1
            m += (1.0 - b1) * g
            step = (m / (1.0 - b1**t)) / denom
            p -= lr * (step + wd * p)
            continue
        x, z = state.x[n], state.z[n]
        # p currently holds y, the point the gradient was taken at
        z -= lr * (g / denom + wd * p)
        if cfg.average:
            # x <- (1 - c) x + c z, written so that x == z stays exact
            x += (1.0 / t) * (z - x)
        else:
            x[...] = z
        p[...] = z + b1 * (x - z)

