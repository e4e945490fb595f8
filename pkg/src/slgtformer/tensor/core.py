"""Tensor type and the reverse-mode tape.

Every differentiable op appends one record to a module-level tape while
gradient recording is enabled.  ``backward`` walks the tape in reverse, which
is a valid reverse topological order because an op can only consume tensors
that already exist when it is recorded.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class DimensionError(ValueError):
    """Shapes or axes are incompatible for an op."""


class DegenerateInputError(ValueError):
    """Input is well-formed but mathematically degenerate for the op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class TapeRecord:
    inputs: tuple
    output: "Tensor"
    backward: BackwardFn
    name: str


class Tape:
    """Ordered log of executed ops, oldest first."""

    def __init__(self):
        self.records: list[TapeRecord] = []

    def __len__(self):
        return len(self.records)

    def append(self, record: TapeRecord):
        self.records.append(record)

    def clear(self):
        self.records.clear()


_TAPE = Tape()
_GRAD_ENABLED = True
CHECK_FINITE = True


def get_tape() -> Tape:
    return _TAPE


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """Dense float64 array with optional gradient tracking.

    Leaves are tensors created directly by the user (parameters, inputs);
    every op output is a non-leaf.  ``grad`` is only ever populated on
    leaves with ``requires_grad=True``.
    """

    __slots__ = ("data", "requires_grad", "grad", "is_leaf", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=np.float64, copy=True, order="C")
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.is_leaf = True
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = np.ascontiguousarray(arr, dtype=np.float64)
        t.requires_grad = requires_grad
        t.grad = None
        t.is_leaf = not requires_grad
        t.name = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self):
        return self.shape[0]

    # Operator sugar, implemented in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def permute(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.permute(self, axes)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(name: str, out: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap an op result and log it on the tape if any input needs grad."""
    if CHECK_FINITE and not np.isfinite(out).all():
        raise NonFiniteError(f"{name} produced non-finite values")
    needs = _GRAD_ENABLED and any(t.requires_grad for t in inputs)
    result = Tensor._wrap(out, needs)
    if needs:
        _TAPE.append(TapeRecord(tuple(inputs), result, backward_fn, name))
    return result


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into every reachable ``requires_grad`` leaf.

    Leaves that take part in a recorded op but receive no gradient get an
    explicit zero grad.  The tape is cleared afterwards.
    """
    if loss.data.size != 1:
        raise DimensionError(f"backward() needs a scalar loss, got shape {loss.shape}")
    try:
        if not loss.requires_grad:
            return
        grads = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(_TAPE.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            in_grads = rec.backward(g)
            for inp, gi in zip(rec.inputs, in_grads):
                if not inp.requires_grad:
                    continue
                if gi is None:
                    continue
                if gi.shape != inp.data.shape:
                    raise DimensionError(
                        f"internal: {rec.name} returned grad {gi.shape} for input {inp.data.shape}"
                    )
                if inp.is_leaf:
                    inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
                else:
                    key = id(inp)
                    prev = grads.get(key)
                    grads[key] = gi if prev is None else prev + gi
        for rec in _TAPE.records:
            for inp in rec.inputs:
                if inp.requires_grad and inp.is_leaf and inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
    finally:
        _TAPE.clear()
