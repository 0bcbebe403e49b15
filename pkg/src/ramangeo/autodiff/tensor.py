"""Dense tensor with reverse-mode automatic differentiation.

Every differentiable op creates a new :class:`Tensor` whose ``_node`` records
the parent tensors and a closure mapping the output gradient to parent
gradients. :func:`backward` orders the reachable nodes topologically into a
:class:`ComputationRecord` and replays the closures in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64

_DEBUG = False


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class EmptyAxisError(ValueError):
    """Raised when an op would reduce over an axis of length zero."""


class ContractError(RuntimeError):
    """Raised when an API precondition is violated."""


class NonFiniteError(FloatingPointError):
    """Raised in debug mode when a forward op produces NaN or Inf."""


def set_debug(enabled: bool) -> None:
    """Toggle the finite-output check performed after every forward op."""
    global _DEBUG
    _DEBUG = bool(enabled)


def debug_enabled() -> bool:
    return _DEBUG


@dataclass
class _Node:
    op: str
    parents: tuple["Tensor", ...]
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """N-dimensional array with an optional gradient.

    ``data`` is always a contiguous numpy array. ``grad`` is ``None`` until a
    backward pass reaches this tensor.
    """

    __slots__ = ("data", "grad", "requires_grad", "_node", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype.kind not in "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._node: _Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def backward(self) -> "ComputationRecord":
        return backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic sugar; the real work lives in functional.py
    def __add__(self, other):
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from . import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        from . import functional as F

        return F.add(self, F.mul(other, -1.0))

    def __neg__(self):
        from . import functional as F

        return F.mul(self, -1.0)

    def sum(self):
        from . import functional as F

        return F.sum(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))


def make_output(
    data: np.ndarray,
    op: str,
    parents: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Wrap a forward result and attach its adjoint closure when needed."""
    if _DEBUG and not np.all(np.isfinite(data)):
        if all(np.all(np.isfinite(p.data)) for p in parents):
            raise NonFiniteError(f"{op} produced non-finite values from finite input")
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = _Node(op, tuple(parents), backward_fn)
    return out


@dataclass
class ComputationRecord:
    """Executed ops in topological order (inputs before outputs)."""

    tensors: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_output(cls, out: Tensor) -> "ComputationRecord":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(out, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t._node is not None:
                for p in t._node.parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))
        return cls([t for t in order if t._node is not None])

    @property
    def ops(self) -> list[str]:
        return [t._node.op for t in self.tensors]

    def __len__(self) -> int:
        return len(self.tensors)


def backward(loss: Tensor, record: ComputationRecord | None = None) -> ComputationRecord:
    """Populate ``.grad`` on every ``requires_grad`` leaf reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` arrays, as with most
    frameworks; call ``zero_grad`` on parameters between steps.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor with requires_grad=True")
    if record is None:
        record = ComputationRecord.from_output(loss)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(record.tensors):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        node = t._node
        parent_grads = node.backward_fn(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if pg.shape != p.shape:
                raise DimensionError(f"{node.op}: adjoint shape {pg.shape} != input shape {p.shape}")
            if p._node is None:
                p.grad = pg.copy() if p.grad is None else p.grad + pg
            else:
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg
    return record
