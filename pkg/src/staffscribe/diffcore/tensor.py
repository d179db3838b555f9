"""Reverse-mode automatic differentiation over numpy arrays.

A `Tensor` wraps an ndarray plus the closures needed to push gradients
back to its parents.  A computation graph lives for exactly one
forward/backward cycle; nothing is retained once the root goes out of
scope.  Double precision is the default so gradient checks are
meaningful; single precision graphs are supported for training.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


class Tensor:
    __slots__ = ("values", "grad", "_parents", "_backward", "name")

    def __init__(
        self,
        values: np.ndarray,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        name: str = "",
    ):
        self.values = values
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def dtype(self):
        return self.values.dtype

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, dtype={self.dtype})"

    # operator sugar; the full op set lives at module level
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        """Populate `.grad` on every tensor reachable from this scalar root."""
        if self.values.size != 1:
            raise ShapeError(
                f"backward: root must be scalar, got shape {self.shape}"
            )
        order = _toposort(self)
        for t in order:
            t.grad = np.zeros_like(t.values)
        self.grad = np.ones_like(self.values)
        for t in reversed(order):
            if t._backward is not None:
                t._backward(t.grad)


def _toposort(root: Tensor) -> list[Tensor]:
    # iterative DFS: recurrent graphs are far deeper than the interpreter stack
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def tensor(values, dtype=np.float64, name: str = "") -> Tensor:
    """Create a leaf tensor from array-like data."""
    return Tensor(np.array(values, dtype=dtype), name=name)


def from_op(
    values: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], None],
    name: str = "",
) -> Tensor:
    """Extension point: wrap an externally computed op with a custom backward.

    `backward(out_grad)` must accumulate (`+=`) into each parent's `.grad`.
    """
    return Tensor(values, tuple(parents), backward, name=name)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _unbroadcast_bias(grad: np.ndarray, bias_shape: tuple[int, ...]) -> np.ndarray:
    # collapse the leading axes added by bias broadcasting
    extra = grad.ndim - len(bias_shape)
    return grad.sum(axis=tuple(range(extra))) if extra else grad


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum.  The only broadcast allowed is bias-add: (..., N) + (N,)."""
    bias_add = a.shape != b.shape
    if bias_add and not (b.ndim == 1 and a.shape[-1:] == b.shape):
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.values + b.values, (a, b))

    def backward(g):
        a.grad += g
        b.grad += _unbroadcast_bias(g, b.shape) if bias_add else g

    out._backward = backward
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    out = Tensor(a.values * b.values, (a, b))

    def backward(g):
        a.grad += g * b.values
        b.grad += g * a.values

    out._backward = backward
    return out


def scale(a: Tensor, k: float) -> Tensor:
    out = Tensor(a.values * k, (a,))

    def backward(g):
        a.grad += g * k

    out._backward = backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} incompatible")
    out = Tensor(a.values @ b.values, (a, b))

    def backward(g):
        a.grad += g @ b.values.T
        b.grad += a.values.T @ g

    out._backward = backward
    return out


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with b broadcast over rows."""
    return add(matmul(x, w), b)


def sigmoid(x: Tensor) -> Tensor:
    v = _sigmoid(x.values)
    out = Tensor(v, (x,))

    def backward(g):
        x.grad += g * v * (1.0 - v)

    out._backward = backward
    return out


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # branch on sign to avoid overflow in exp
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logsigmoid(x: Tensor) -> Tensor:
    """log sigma(x), computed as -softplus(-x) for stability."""
    v = -_softplus(-x.values)
    out = Tensor(v, (x,))

    def backward(g):
        x.grad += g * _sigmoid(-x.values)

    out._backward = backward
    return out


def _softplus(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))


def tanh(x: Tensor) -> Tensor:
    v = np.tanh(x.values)
    out = Tensor(v, (x,))

    def backward(g):
        x.grad += g * (1.0 - v * v)

    out._backward = backward
    return out


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    mask = x.values >= 0
    out = Tensor(np.where(mask, x.values, slope * x.values), (x,))

    def backward(g):
        x.grad += g * np.where(mask, 1.0, slope)

    out._backward = backward
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    v = _softmax(x.values, axis)
    out = Tensor(v, (x,))

    def backward(g):
        inner = (g * v).sum(axis=axis, keepdims=True)
        x.grad += v * (g - inner)

    out._backward = backward
    return out


def _softmax(v: np.ndarray, axis: int) -> np.ndarray:
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    v = shifted - lse
    out = Tensor(v, (x,))

    def backward(g):
        x.grad += g - np.exp(v) * g.sum(axis=axis, keepdims=True)

    out._backward = backward
    return out


def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    out = Tensor(np.asarray(x.values.sum(axis=axis)), (x,))

    def backward(g):
        if axis is None:
            x.grad += g
        else:
            x.grad += np.expand_dims(g, axis)

    out._backward = backward
    return out


def mean_(x: Tensor) -> Tensor:
    return scale(sum_(x), 1.0 / x.size)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: empty input list")
    for t in tensors[1:]:
        sa = list(t.shape)
        sb = list(tensors[0].shape)
        sa.pop(axis if axis >= 0 else t.ndim + axis)
        sb.pop(axis if axis >= 0 else tensors[0].ndim + axis)
        if sa != sb:
            raise ShapeError(
                f"concat: shapes {tensors[0].shape} and {t.shape} disagree off axis {axis}"
            )
    out = Tensor(np.concatenate([t.values for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t.grad += g[tuple(idx)]

    out._backward = backward
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    for t in tensors[1:]:
        _check_same_shape("stack", tensors[0], t)
    out = Tensor(np.stack([t.values for t in tensors], axis=axis), tuple(tensors))

    def backward(g):
        parts = np.moveaxis(g, axis, 0)
        for t, part in zip(tensors, parts):
            t.grad += part

    out._backward = backward
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(x.values.reshape(shape), (x,))

    def backward(g):
        x.grad += g.reshape(x.shape)

    out._backward = backward
    return out


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = Tensor(np.transpose(x.values, axes), (x,))
    inverse = np.argsort(axes)

    def backward(g):
        x.grad += np.transpose(g, inverse)

    out._backward = backward
    return out


def gather_columns(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select columns of a 2-D tensor: out[:, j] = x[:, idx[j]].

    Repeated indices are allowed; their gradients accumulate.
    """
    if x.ndim != 2:
        raise ShapeError(f"gather_columns: need 2-D input, got {x.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[1]):
        raise ShapeError(
            f"gather_columns: index out of range for {x.shape[1]} columns"
        )
    out = Tensor(x.values[:, idx], (x,))

    def backward(g):
        np.add.at(x.grad, (slice(None), idx), g)

    out._backward = backward
    return out


def index_axis0(x: Tensor, i: int) -> Tensor:
    """Select one slab along the leading axis (e.g. one sample of a batch)."""
    out = Tensor(x.values[i], (x,))

    def backward(g):
        x.grad[i] += g

    out._backward = backward
    return out
