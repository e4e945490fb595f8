"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Tensor, backward, no_grad

DEFAULT_H = 1e-5
# Denominator floor so that gradients that are ~0 analytically are judged on
# absolute error; FD noise at h=1e-5 is ~1e-10 for O(1) losses.
REL_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_grad(fn: Callable[[], Tensor], target: Tensor, h: float = DEFAULT_H) -> np.ndarray:
    """d fn() / d target by central differences, perturbing ``target.data`` in place."""
    flat = target.data.reshape(-1)
    grad = np.empty(flat.size)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn().item()
            flat[i] = orig - h
            fm = fn().item()
            flat[i] = orig
            grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(target.shape)


@dataclass
class GradReport:
    max_rel_err: float = 0.0
    worst: str = ""
    per_tensor: dict = field(default_factory=dict)
    checked: int = 0

    def passed(self, tol: float) -> bool:
        return self.max_rel_err < tol


def check_gradients(fn: Callable[[], Tensor], tensors: dict, h: float = DEFAULT_H) -> GradReport:
    """Compare autodiff and finite-difference gradients for named leaf tensors.

    ``fn`` must rebuild the scalar loss from the current tensor values.
    """
    for t in tensors.values():
        t.grad = None
    loss = fn()
    backward(loss)
    report = GradReport()
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_grad(fn, t, h)
        err = float(relative_error(analytic, numeric).max()) if t.size else 0.0
        report.per_tensor[name] = err
        report.checked += t.size
        if err >= report.max_rel_err:
            report.max_rel_err, report.worst = err, name
    return report
