"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward

__all__ = ["numerical_grad", "relative_error", "check_gradients"]


def numerical_grad(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], index: int,
                   h: float = 1e-5) -> np.ndarray:
    """d fn / d inputs[index] by central differences; ``fn`` takes plain arrays wrapped as Tensors."""
    base = [np.array(x, dtype=np.float64) for x in inputs]
    target = base[index]
    grad = np.zeros_like(target)
    for pos in np.ndindex(target.shape):
        orig = target[pos]
        target[pos] = orig + h
        plus = fn(*[Tensor(x) for x in base]).item()
        target[pos] = orig - h
        minus = fn(*[Tensor(x) for x in base]).item()
        target[pos] = orig
        grad[pos] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||); zero when both gradients vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray],
                    h: float = 1e-5) -> list[float]:
    """Relative error between analytic and numerical gradient, per input."""
    leaves = [Tensor(x, requires_grad=True) for x in inputs]
    backward(fn(*leaves))
    errors = []
    for i, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros(leaf.shape)
        errors.append(relative_error(analytic, numerical_grad(fn, inputs, i, h)))
    return errors
