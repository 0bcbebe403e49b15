"""Differentiable primitives used by the ConvNeXt1D forward pass.

Conventions: sequence tensors are channels-first, ``(C, L)`` or ``(B, C, L)``.
All ops are pure functions of their inputs plus, for the stochastic ones, an
explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .tensor import DimensionError, EmptyAxisError, Tensor, as_tensor, make_output

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = _coerce(b, a)
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_output(out, "add", (a, b), back)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = _coerce(b, a)
    out = a.data * b.data

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_output(out, "mul", (a, b), back)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = np.asarray(x.data.sum())

    def back(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_output(out, "sum", (x,), back)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def back(g):
        return (g.reshape(x.shape),)

    return make_output(out, "reshape", (x,), back)


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """Zero-padded 1-D cross-correlation.

    Args:
        x: ``(C_in, L)`` or ``(B, C_in, L)``.
        weight: ``(C_out, C_in // groups, K)``.
        bias: optional ``(C_out,)``.

    Returns:
        ``(C_out, L_out)`` or ``(B, C_out, L_out)`` with
        ``L_out = (L + 2*padding - K) // stride + 1``.
    """
    unbatched = x.ndim == 2
    if x.ndim not in (2, 3):
        raise DimensionError(f"conv1d input must be (C, L) or (B, C, L), got shape {x.shape}")
    if weight.ndim != 3:
        raise DimensionError(f"conv1d weight must be (C_out, C_in/groups, K), got shape {weight.shape}")
    xd = x.data[None] if unbatched else x.data
    B, C_in, L = xd.shape
    C_out, cg_in, K = weight.shape
    if groups < 1 or C_in % groups:
        raise DimensionError(f"input channels (axis 1, C_in={C_in}) not divisible by groups={groups}")
    if C_out % groups:
        raise DimensionError(f"output channels (weight axis 0, C_out={C_out}) not divisible by groups={groups}")
    if cg_in != C_in // groups:
        raise DimensionError(
            f"weight axis 1 has {cg_in} channels, expected C_in/groups = {C_in}/{groups} = {C_in // groups}"
        )
    if bias is not None and bias.shape != (C_out,):
        raise DimensionError(f"bias shape {bias.shape} != (C_out,) = ({C_out},)")
    if stride < 1 or padding < 0:
        raise DimensionError(f"invalid stride={stride} / padding={padding}")
    Lp = L + 2 * padding
    if Lp < K:
        raise DimensionError(f"length axis: L + 2*padding = {Lp} shorter than kernel K={K}")
    L_out = (Lp - K) // stride + 1
    cg_out = C_out // groups

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    span = stride * (L_out - 1) + 1
    w = weight.data
    depthwise = cg_in == 1 and cg_out == 1
    if depthwise:
        # one filter per channel: accumulate shifted copies, K is small
        out = np.zeros((B, C_out, L_out), dtype=np.result_type(xp, w))
        for k in range(K):
            out += xp[:, :, k : k + span : stride] * w[None, :, 0, k, None]
    else:
        # (B, C_in, L_out, K) strided windows; one tensordot per group
        win = sliding_window_view(xp, K, axis=2)[:, :, ::stride, :]
        out = np.empty((B, C_out, L_out), dtype=np.result_type(xp, w))
        for g in range(groups):
            wg = w[g * cg_out : (g + 1) * cg_out]
            res = np.tensordot(win[:, g * cg_in : (g + 1) * cg_in], wg, axes=([1, 3], [1, 2]))
            out[:, g * cg_out : (g + 1) * cg_out] = res.transpose(0, 2, 1)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def back(g):
        gb = g[None] if unbatched else g
        gx = gw = gbias = None
        if depthwise:
            if weight.requires_grad:
                gw = np.empty(weight.shape, dtype=gb.dtype)
                for k in range(K):
                    gw[:, 0, k] = np.einsum("bcl,bcl->c", xp[:, :, k : k + span : stride], gb)
            if x.requires_grad:
                gxp = np.zeros((B, C_in, Lp), dtype=gb.dtype)
                for k in range(K):
                    gxp[:, :, k : k + span : stride] += gb * w[None, :, 0, k, None]
        else:
            if weight.requires_grad:
                gw = np.empty(weight.shape, dtype=gb.dtype)
            if x.requires_grad:
                gwin = np.empty((B, C_in, L_out, K), dtype=gb.dtype)
            for grp in range(groups):
                o, i = slice(grp * cg_out, (grp + 1) * cg_out), slice(grp * cg_in, (grp + 1) * cg_in)
                if weight.requires_grad:
                    gw[o] = np.tensordot(gb[:, o], win[:, i], axes=([0, 2], [0, 2]))
                if x.requires_grad:
                    gwin[:, i] = np.tensordot(gb[:, o], w[o], axes=([1], [0])).transpose(0, 2, 1, 3)
            if x.requires_grad:
                gxp = np.zeros((B, C_in, Lp), dtype=gb.dtype)
                for k in range(K):
                    gxp[:, :, k : k + span : stride] += gwin[:, :, :, k]
        if x.requires_grad:
            gx = gxp[:, :, padding : padding + L] if padding else gxp
            gx = gx[0] if unbatched else gx
            gx = np.ascontiguousarray(gx)
        if bias is not None and bias.requires_grad:
            gbias = gb.sum(axis=(0, 2))
        return (gx, gw) if bias is None else (gx, gw, gbias)

    out = out[0] if unbatched else out
    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_output(out, "conv1d", parents, back)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6, axis: int = -1) -> Tensor:
    """Normalize over one axis (the channel axis), then apply ``gamma``/``beta``.

    ``axis=-1`` matches the channels-last convention; the model passes
    ``axis=1`` for ``(B, C, L)`` activations.
    """
    axis = axis % x.ndim
    C = x.shape[axis]
    if C == 0:
        raise EmptyAxisError(f"layer_norm over empty axis {axis}")
    if gamma.shape != (C,) or beta.shape != (C,):
        raise DimensionError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} != ({C},) on axis {axis}")
    bshape = [1] * x.ndim
    bshape[axis] = C
    gm = gamma.data.reshape(bshape)
    bt = beta.data.reshape(bshape)

    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gm + bt
    red = tuple(i for i in range(x.ndim) if i != axis)

    def back(g):
        gx = None
        if x.requires_grad:
            gxhat = g * gm
            gx = rstd * (
                gxhat
                - gxhat.mean(axis=axis, keepdims=True)
                - xhat * (gxhat * xhat).mean(axis=axis, keepdims=True)
            )
        ggamma = (g * xhat).sum(axis=red) if gamma.requires_grad else None
        gbeta = g.sum(axis=red) if beta.requires_grad else None
        return gx, ggamma, gbeta

    return make_output(out, "layer_norm", (x, gamma, beta), back)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the erf form of the normal CDF."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def back(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return make_output(out, "gelu", (x,), back)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the trailing axis, ``x @ weight.T + bias``."""
    if weight.ndim != 2:
        raise DimensionError(f"linear weight must be (C_out, C_in), got {weight.shape}")
    C_out, C_in = weight.shape
    if x.ndim < 1 or x.shape[-1] != C_in:
        raise DimensionError(f"linear: trailing axis of input {x.shape} != C_in={C_in}")
    if bias is not None and bias.shape != (C_out,):
        raise DimensionError(f"linear bias shape {bias.shape} != ({C_out},)")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def back(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = None
        if weight.requires_grad:
            gw = g.reshape(-1, C_out).T @ x.data.reshape(-1, C_in)
        if bias is None:
            return gx, gw
        gbias = g.reshape(-1, C_out).sum(axis=0) if bias.requires_grad else None
        return gx, gw, gbias

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_output(out, "linear", parents, back)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the trailing (sequence) axis: ``(.., C, L) -> (.., C)``."""
    L = x.shape[-1] if x.ndim else 0
    if x.ndim < 1 or L == 0:
        raise EmptyAxisError(f"global_avg_pool over empty sequence axis, shape {x.shape}")
    out = x.data.mean(axis=-1)

    def back(g):
        return (np.repeat(g[..., None] / L, L, axis=-1),)

    return make_output(out, "global_avg_pool", (x,), back)


def _check_rate(rate: float) -> None:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"drop rate must lie in [0, 1), got {rate}")


def drop_path(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Stochastic depth: drop the whole residual branch per sample.

    The first axis is the sample axis for batched input; an unbatched input
    is treated as one sample.
    """
    _check_rate(rate)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("drop_path in training mode needs an explicit rng")
    keep = 1.0 - rate
    mshape = (x.shape[0],) + (1,) * (x.ndim - 1) if x.ndim >= 3 else (1,) * x.ndim
    mask = (rng.random(mshape) < keep).astype(x.dtype) / keep
    out = x.data * mask

    def back(g):
        return (g * mask,)

    return make_output(out, "drop_path", (x,), back)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout with an independent Bernoulli mask per element."""
    _check_rate(rate)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
    out = x.data * mask

    def back(g):
        return (g * mask,)

    return make_output(out, "dropout", (x,), back)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis (plain numpy, no graph)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under ``softmax(logits)``."""
    if logits.ndim != 2:
        raise DimensionError(f"logits must be (B, C), got {logits.shape}")
    B, C = logits.shape
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.shape[0] != B:
        raise DimensionError(f"{t.shape[0]} targets for batch axis of size {B}")
    if B == 0:
        raise EmptyAxisError("softmax_cross_entropy on an empty batch")
    if np.any(t < 0) or np.any(t >= C):
        bad = t[(t < 0) | (t >= C)][0]
        raise IndexError(f"target index {bad} out of range for {C} classes")
    logp = log_softmax(logits.data)
    rows = np.arange(B)
    loss = np.asarray(-logp[rows, t].mean(), dtype=logits.dtype)

    def back(g):
        p = np.exp(logp)
        p[rows, t] -= 1.0
        return (p * (g / B),)

    return make_output(loss, "softmax_cross_entropy", (logits,), back)
