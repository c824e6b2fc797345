"""Dense float64 tensors with reverse-mode differentiation.

The engine is intentionally small: elementwise arithmetic (``a`` and ``b``
must share a shape unless ``b`` is a scalar), axis reductions, a handful of
activations, 2-D matmul and the shape plumbing needed by the rest of the
package. Implicit broadcasting is not supported; use :meth:`Tensor.expand`.

Every forward result is checked for finiteness. A NaN or Inf produced from
finite inputs raises :class:`NonFiniteError` instead of propagating.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "DegenerateInputError",
    "NonFiniteError",
    "as_tensor",
    "backward",
    "concat",
    "no_grad",
    "cross_entropy",
    "one_hot",
]


class ShapeError(ValueError):
    """Operands violate a shape contract."""


class DegenerateInputError(ArithmeticError):
    """Input makes the requested quantity undefined (e.g. division by zero)."""


class NonFiniteError(FloatingPointError):
    """A forward operation produced NaN or Inf."""


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced a non-finite value")


class Tensor:
    """Immutable float64 array plus an optional node in the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_priority__ = 1000  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64, copy=True, order="C")
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"

    # ------------------------------------------------------------------ basics
    @property
    def shape(self) -> tuple[int, ...]:
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
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    @staticmethod
    def _make(data: np.ndarray, parents: Iterable["Tensor"], backward_fn, op: str) -> "Tensor":
        _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        data = np.asarray(data, dtype=np.float64, order="C")
        data.flags.writeable = False
        out.data = data
        out.grad = None
        out.op = op
        parents = tuple(parents)
        if _grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # ------------------------------------------------------------- elementwise
    def _binary_operand(self, other, op: str) -> "Tensor":
        other = as_tensor(other)
        if other.shape != self.shape and other.ndim != 0:
            raise ShapeError(f"{op}: shapes {self.shape} and {other.shape} differ")
        return other

    @staticmethod
    def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        if grad.shape == shape:
            return grad
        return np.asarray(grad.sum())

    def add(self, other) -> "Tensor":
        other = self._binary_operand(other, "add")
        a, b = self, other

        def bw(g):
            return g, Tensor._reduce_to(g, b.shape)

        return Tensor._make(a.data + b.data, (a, b), bw, "add")

    def sub(self, other) -> "Tensor":
        other = self._binary_operand(other, "sub")
        a, b = self, other

        def bw(g):
            return g, Tensor._reduce_to(-g, b.shape)

        return Tensor._make(a.data - b.data, (a, b), bw, "sub")

    def mul(self, other) -> "Tensor":
        other = self._binary_operand(other, "mul")
        a, b = self, other

        def bw(g):
            return g * b.data, Tensor._reduce_to(g * a.data, b.shape)

        return Tensor._make(a.data * b.data, (a, b), bw, "mul")

    def div(self, other) -> "Tensor":
        other = self._binary_operand(other, "div")
        if np.any(other.data == 0.0):
            raise DegenerateInputError("div: division by exact zero")
        a, b = self, other
        out_data = a.data / b.data

        def bw(g):
            return g / b.data, Tensor._reduce_to(-g * out_data / b.data, b.shape)

        return Tensor._make(out_data, (a, b), bw, "div")

    def pow(self, exponent) -> "Tensor":
        if isinstance(exponent, Tensor):
            if exponent.ndim != 0 or exponent.requires_grad:
                raise ShapeError("pow: exponent must be a constant scalar")
            exponent = float(exponent.data)
        p = float(exponent)
        a = self
        if p < 0 and np.any(a.data == 0.0):
            raise DegenerateInputError("pow: negative power of zero")

        def bw(g):
            return (g * p * np.power(a.data, p - 1.0),)

        return Tensor._make(np.power(a.data, p), (a,), bw, "pow")

    def neg(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def exp(self) -> "Tensor":
        with np.errstate(over="ignore"):
            out_data = np.exp(self.data)
        return Tensor._make(out_data, (self,), lambda g: (g * out_data,), "exp")

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise DegenerateInputError("log: non-positive input")
        a = self
        return Tensor._make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")

    def abs(self) -> "Tensor":
        a = self
        return Tensor._make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")

    __add__ = add
    __sub__ = sub
    __mul__ = mul
    __truediv__ = div
    __pow__ = pow
    __neg__ = neg

    def __radd__(self, other):
        return self.add(other)

    def __rsub__(self, other):
        return as_tensor(other).sub(self) if np.ndim(other) else self.neg().add(other)

    def __rmul__(self, other):
        return self.mul(other)

    def __rtruediv__(self, other):
        if np.ndim(other) == 0:
            return self.pow(-1.0).mul(other)
        return as_tensor(other).div(self)

    # -------------------------------------------------------------- reductions
    def _axes(self, axis) -> tuple[int, ...]:
        if axis is None:
            axes = tuple(range(self.ndim))
        elif isinstance(axis, int):
            axes = (axis,)
        else:
            axes = tuple(axis)
        axes = tuple(a % self.ndim for a in axes) if self.ndim else ()
        if self.size == 0 or any(self.shape[a] == 0 for a in axes):
            raise ShapeError("reduction over an empty axis")
        return axes

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        axes = self._axes(axis)
        a = self

        def bw(g):
            g = g if keepdims else np.expand_dims(g, axes)
            return (np.broadcast_to(g, a.shape),)

        return Tensor._make(a.data.sum(axis=axes, keepdims=keepdims), (a,), bw, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        axes = self._axes(axis)
        n = int(np.prod([self.shape[i] for i in axes]))
        a = self

        def bw(g):
            g = g if keepdims else np.expand_dims(g, axes)
            return (np.broadcast_to(g / n, a.shape),)

        return Tensor._make(a.data.mean(axis=axes, keepdims=keepdims), (a,), bw, "mean")

    def var(self, axis=None, keepdims: bool = False) -> "Tensor":
        """Population variance (denominator N) over ``axis``."""
        axes = self._axes(axis)
        n = int(np.prod([self.shape[i] for i in axes]))
        a = self
        centered = a.data - a.data.mean(axis=axes, keepdims=True)

        def bw(g):
            g = g if keepdims else np.expand_dims(g, axes)
            return (g * (2.0 / n) * centered,)

        out = (centered * centered).mean(axis=axes, keepdims=keepdims)
        return Tensor._make(out, (a,), bw, "var")

    def max(self, axis=None, keepdims: bool = False) -> "Tensor":
        """Maximum over ``axis``; the result is not differentiable."""
        axes = self._axes(axis)
        return Tensor(self.data.max(axis=axes, keepdims=keepdims))

    # ------------------------------------------------------------- activations
    def sigmoid(self) -> "Tensor":
        x = self.data
        # split by sign so exp never overflows
        out_data = np.empty_like(x)
        pos = x >= 0
        out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out_data[~pos] = ex / (1.0 + ex)
        return Tensor._make(out_data, (self,), lambda g: (g * out_data * (1.0 - out_data),), "sigmoid")

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)
        return Tensor._make(out_data, (self,), lambda g: (g * (1.0 - out_data * out_data),), "tanh")

    def relu(self) -> "Tensor":
        mask = self.data > 0
        return Tensor._make(np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,), "relu")

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        ex = np.exp(shifted)
        out_data = ex / ex.sum(axis=axis, keepdims=True)

        def bw(g):
            return (out_data * (g - (g * out_data).sum(axis=axis, keepdims=True)),)

        return Tensor._make(out_data, (self,), bw, "softmax")

    def log_softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out_data = shifted - lse
        probs = np.exp(out_data)

        def bw(g):
            return (g - probs * g.sum(axis=axis, keepdims=True),)

        return Tensor._make(out_data, (self,), bw, "log_softmax")

    # ------------------------------------------------------------ linear algebra
    def matmul(self, other) -> "Tensor":
        other = as_tensor(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise ShapeError(f"matmul: cannot multiply {self.shape} by {other.shape}")
        a, b = self, other

        def bw(g):
            return g @ b.data.T, a.data.T @ g

        return Tensor._make(a.data @ b.data, (a, b), bw, "matmul")

    __matmul__ = matmul

    @property
    def T(self) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError("transpose needs a 2-D tensor")
        return Tensor._make(self.data.T, (self,), lambda g: (g.T,), "transpose")

    # ------------------------------------------------------------------ shapes
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return Tensor._make(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),), "reshape")

    def expand(self, shape: Sequence[int]) -> "Tensor":
        """Broadcast size-1 axes (or a scalar) to ``shape``; only explicit broadcast in the engine."""
        shape = tuple(shape)
        src = self.shape
        if len(src) not in (0, len(shape)) or any(s not in (1, t) for s, t in zip(src, shape)):
            raise ShapeError(f"expand: cannot expand {src} to {shape}")
        axes = tuple(i for i, (s, t) in enumerate(zip(src, shape)) if s != t) if src else None

        def bw(g):
            if not src:
                return (np.asarray(g.sum()),)
            return (g.sum(axis=axes, keepdims=True),)

        return Tensor._make(np.broadcast_to(self.data, shape), (self,), bw, "expand")

    def __getitem__(self, idx) -> "Tensor":
        src = self.shape

        def bw(g):
            full = np.zeros(src)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(self.data[idx], (self,), bw, "getitem")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape}")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=ax), tensors, bw, "concat")


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    target = one_hot(labels, logits.shape[1])
    return (logits.log_softmax(axis=1) * Tensor(target)).sum(axis=1).mean().neg()


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Populate ``.grad`` on every requires-grad leaf reachable from ``loss``.

    Leaf gradients are overwritten, not accumulated, so repeated calls on an
    unchanged graph give identical results. Returns the leaf gradients keyed
    by ``id(leaf)``.
    """
    if loss.size != 1 or loss.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
    leaves: dict[int, Tensor] = {}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                leaves[id(node)] = node
                grads[id(node)] = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=np.float64)
            prev = grads.get(id(parent))
            grads[id(parent)] = pg.copy() if prev is None else prev + pg
    out = {}
    for key, leaf in leaves.items():
        g = np.array(np.broadcast_to(grads[key], leaf.shape))
        leaf.grad = g
        out[key] = g
    return out
