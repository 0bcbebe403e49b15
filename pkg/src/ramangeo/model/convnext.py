"""ConvNeXt1D: patchify stem, four stages of inverted-bottleneck blocks, pooled head."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..autodiff import DimensionError, Tensor
from ..autodiff import functional as F

STEM_KERNEL = 4
DOWNSAMPLE_KERNEL = 2
DW_KERNEL = 7
DW_PADDING = 3
INIT_STD = 0.02
INIT_TRUNCATION = 2.0  # in standard deviations


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    depths: list[int] = field(default_factory=lambda: [2, 2, 3, 2])
    dims: list[int] = field(default_factory=lambda: [32, 64, 128, 256])
    num_classes: int = 2
    input_length: int = 4096
    drop_path_max: float = 0.1
    dropout_rate: float = 0.0
    expansion_ratio: int = 4
    layer_scale_init: float = 1e-6
    norm_eps: float = 1e-6

    def validate(self) -> None:
        if len(self.depths) != 4 or len(self.dims) != 4:
            raise ConfigError(f"depths and dims need 4 entries, got {self.depths} / {self.dims}")
        if any(d < 1 for d in self.depths) or any(d < 1 for d in self.dims):
            raise ConfigError("depths and dims must be positive")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_length <= 0 or self.input_length % 32:
            raise ConfigError(f"input_length must be a positive multiple of 32, got {self.input_length}")
        if not 0.0 <= self.drop_path_max < 1.0 or not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("drop rates must lie in [0, 1)")
        if self.expansion_ratio < 1:
            raise ConfigError("expansion_ratio must be >= 1")
        if self.norm_eps <= 0:
            raise ConfigError("norm_eps must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        kw = dict(d)
        for key in ("depths", "dims"):
            if key in kw:
                kw[key] = [int(v) for v in kw[key]]
        return cls(**kw)

    def drop_path_rates(self) -> list[float]:
        """Per-block rates ramped linearly from 0 to ``drop_path_max`` in network order."""
        n = sum(self.depths)
        return [float(r) for r in np.linspace(0.0, self.drop_path_max, n)]


def _param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, kind) in network order; kind is weight/bias/norm_w/norm_b/gamma."""
    d, e = cfg.dims, cfg.expansion_ratio
    out = [
        ("stem.conv.weight", (d[0], 1, STEM_KERNEL), "weight"),
        ("stem.conv.bias", (d[0],), "bias"),
        ("stem.norm.weight", (d[0],), "norm_w"),
        ("stem.norm.bias", (d[0],), "norm_b"),
    ]
    for s in range(4):
        if s > 0:
            p = f"stages.{s}.downsample"
            out += [
                (f"{p}.norm.weight", (d[s - 1],), "norm_w"),
                (f"{p}.norm.bias", (d[s - 1],), "norm_b"),
                (f"{p}.conv.weight", (d[s], d[s - 1], DOWNSAMPLE_KERNEL), "weight"),
                (f"{p}.conv.bias", (d[s],), "bias"),
            ]
        for j in range(cfg.depths[s]):
            p = f"stages.{s}.blocks.{j}"
            c = d[s]
            out += [
                (f"{p}.dwconv.weight", (c, 1, DW_KERNEL), "weight"),
                (f"{p}.dwconv.bias", (c,), "bias"),
                (f"{p}.norm.weight", (c,), "norm_w"),
                (f"{p}.norm.bias", (c,), "norm_b"),
                (f"{p}.pwconv1.weight", (e * c, c, 1), "weight"),
                (f"{p}.pwconv1.bias", (e * c,), "bias"),
                (f"{p}.pwconv2.weight", (c, e * c, 1), "weight"),
                (f"{p}.pwconv2.bias", (c,), "bias"),
                (f"{p}.gamma", (c,), "gamma"),
            ]
    out += [
        ("head.norm.weight", (d[3],), "norm_w"),
        ("head.norm.bias", (d[3],), "norm_b"),
        ("head.fc.weight", (cfg.num_classes, d[3]), "weight"),
        ("head.fc.bias", (cfg.num_classes,), "bias"),
    ]
    return out


def truncated_normal(rng: np.random.Generator, shape, std=INIT_STD, bound=INIT_TRUNCATION) -> np.ndarray:
    """Zero-mean normal samples, redrawing any that fall outside ``±bound·std``."""
    out = rng.normal(0.0, std, size=shape)
    limit = bound * std
    bad = np.abs(out) > limit
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > limit
    return out


class Model:
    """Parameters (an ordered name -> Tensor map), config, and class labels."""

    def __init__(
        self,
        config: ModelConfig,
        params: dict[str, Tensor],
        labels: list[str] | None = None,
        metadata: dict | None = None,
    ):
        config.validate()
        self.metadata = dict(metadata or {})
        self.config = config
        self.params = params
        if labels is None:
            labels = [f"class_{i}" for i in range(config.num_classes)]
        if len(labels) != config.num_classes:
            raise ConfigError(f"{len(labels)} class labels for num_classes={config.num_classes}")
        self.labels = list(labels)
        expected = [(n, s) for n, s, _ in _param_shapes(config)]
        got = [(n, t.shape) for n, t in params.items()]
        if got != expected:
            raise ConfigError("parameter set does not match the config")

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def param_kinds(self) -> dict[str, str]:
        return {n: k for n, _, k in _param_shapes(self.config)}

    def decay_mask(self) -> dict[str, bool]:
        """True for conv/linear weights; norms, biases and layer scales are not decayed."""
        return {n: k == "weight" for n, k in self.param_kinds().items()}

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def block_params(self, stage: int, index: int) -> dict[str, Tensor]:
        prefix = f"stages.{stage}.blocks.{index}."
        return {n[len(prefix):]: t for n, t in self.params.items() if n.startswith(prefix)}

    def copy(self) -> "Model":
        params = {n: Tensor(t.data.copy(), requires_grad=t.requires_grad) for n, t in self.params.items()}
        return Model(dataclasses.replace(self.config), params, list(self.labels), dict(self.metadata))

    def __call__(self, batch, training=False, rng=None):
        return forward(self, batch, training=training, rng=rng)


def init_model(
    config: ModelConfig, seed: int, labels: list[str] | None = None, dtype=np.float32
) -> Model:
    """Truncated-normal weights, zero biases, unit/zero norm affines, constant layer scale."""
    config.validate()
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape, kind in _param_shapes(config):
        if kind == "weight":
            arr = truncated_normal(rng, shape)
        elif kind == "norm_w":
            arr = np.ones(shape)
        elif kind == "gamma":
            arr = np.full(shape, config.layer_scale_init)
        else:
            arr = np.zeros(shape)
        params[name] = Tensor(arr.astype(dtype), requires_grad=True, name=name)
    return Model(config, params, labels)


def count_params(config: ModelConfig) -> int:
    """Trainable-parameter count derived from the layer shapes alone."""
    config.validate()
    total = 0
    for _, shape, _ in _param_shapes(config):
        n = 1
        for s in shape:
            n *= s
        total += n
    return total


def _norm(x: Tensor, w: Tensor, b: Tensor, eps: float) -> Tensor:
    return F.layer_norm(x, w, b, eps=eps, axis=1)


def forward_block(
    x: Tensor,
    p: Mapping[str, Tensor],
    drop_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
    eps: float = 1e-6,
) -> Tensor:
    """``x + DropPath(gamma * PW2(GELU(PW1(LN(DWConv(x))))))`` on ``(B, C, L)``."""
    C = p["dwconv.weight"].shape[0]
    if x.ndim != 3 or x.shape[1] != C:
        raise DimensionError(f"block expects (B, {C}, L) input, got {x.shape}")
    h = F.conv1d(x, p["dwconv.weight"], p["dwconv.bias"], padding=DW_PADDING, groups=C)
    h = _norm(h, p["norm.weight"], p["norm.bias"], eps)
    h = F.conv1d(h, p["pwconv1.weight"], p["pwconv1.bias"])
    h = F.gelu(h)
    h = F.conv1d(h, p["pwconv2.weight"], p["pwconv2.bias"])
    h = F.mul(h, F.reshape(p["gamma"], (C, 1)))
    h = F.drop_path(h, drop_rate, training, rng)
    return F.add(x, h)


def forward_features(
    model: Model, batch, training: bool = False, rng: np.random.Generator | None = None, trace: list | None = None
) -> Tensor:
    """Stem and stages; returns the final-stage map ``(B, dims[3], L/32)``.

    If ``trace`` is a list, the output of the stem and of each stage is
    appended to it.
    """
    cfg = model.config
    P = model.params
    x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch, dtype=model.dtype))
    if x.ndim == 2:
        x = F.reshape(x, (x.shape[0], 1, x.shape[1]))
    if x.ndim != 3 or x.shape[1] != 1:
        raise DimensionError(f"expected batch of shape (B, 1, L), got {x.shape}")
    if x.shape[2] != cfg.input_length:
        raise DimensionError(f"input length {x.shape[2]} != config input_length {cfg.input_length}")
    if (training and (cfg.drop_path_max > 0 or cfg.dropout_rate > 0)) and rng is None:
        raise ValueError("training-mode forward with nonzero drop rates needs an rng")

    x = F.conv1d(x, P["stem.conv.weight"], P["stem.conv.bias"], stride=STEM_KERNEL)
    x = _norm(x, P["stem.norm.weight"], P["stem.norm.bias"], cfg.norm_eps)
    if trace is not None:
        trace.append(x)
    rates = cfg.drop_path_rates()
    k = 0
    for s in range(4):
        if s > 0:
            p = f"stages.{s}.downsample"
            x = _norm(x, P[f"{p}.norm.weight"], P[f"{p}.norm.bias"], cfg.norm_eps)
            x = F.conv1d(x, P[f"{p}.conv.weight"], P[f"{p}.conv.bias"], stride=DOWNSAMPLE_KERNEL)
        for j in range(cfg.depths[s]):
            x = forward_block(x, model.block_params(s, j), rates[k], training, rng, cfg.norm_eps)
            k += 1
        if trace is not None:
            trace.append(x)
    return x


def forward(model: Model, batch, training: bool = False, rng: np.random.Generator | None = None, trace=None) -> Tensor:
    """Logits ``(B, num_classes)`` for a batch ``(B, 1, input_length)``."""
    cfg = model.config
    P = model.params
    x = forward_features(model, batch, training, rng, trace)
    x = F.global_avg_pool(x)
    x = F.layer_norm(x, P["head.norm.weight"], P["head.norm.bias"], eps=cfg.norm_eps, axis=-1)
    x = F.dropout(x, cfg.dropout_rate, training, rng)
    return F.linear(x, P["head.fc.weight"], P["head.fc.bias"])


def predict_proba(model: Model, batch) -> np.ndarray:
    return F.softmax(forward(model, batch).data.astype(np.float64))
