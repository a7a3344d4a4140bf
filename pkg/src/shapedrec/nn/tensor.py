"""Reverse-mode automatic differentiation over float64 numpy arrays.

Only the operations needed by the recommender networks are provided: affine
maps, gated recurrences, ReLU/sigmoid/tanh, temperature softmax, row
gathers and a fused logistic loss.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ConfigurationError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (inference only)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A node in the computation graph.

    ``requires_grad`` is true for parameters and for every value computed
    from one. A node created by :func:`stop_gradient` never requires grad,
    so nothing upstream of it receives a gradient through it.
    """

    __slots__ = ("data", "grad", "requires_grad", "stop_grad", "op", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        op: str = "leaf",
        name: str | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.stop_grad = False
        self.op = op
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    # -- basic protocol ---------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray, owned: bool = False) -> None:
        """Add ``g`` to this node's gradient. ``owned`` arrays are adopted without a copy."""
        if not self.requires_grad:
            return
        if g.shape != self.data.shape:
            g = _unbroadcast(g, self.data.shape)
            owned = False
        if self.grad is None:
            self.grad = g if owned else np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Propagate gradients from this node to every leaf that requires them."""
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise ConfigurationError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        # interior nodes hold transient grads; leaves keep theirs
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    node.grad = None

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ConfigurationError("division by a tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return mean(self, axis=axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Iterable[Tensor], backward, op: str) -> Tensor:
    parents = tuple(parents)
    req = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=parents if req else (), backward=backward if req else None, op=op)


# -- elementwise -------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        a._accumulate(g)
        b._accumulate(g)

    return _node(a.data + b.data, (a, b), bw, "add")


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: a._accumulate(-g), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        a._accumulate(g * b.data)
        b._accumulate(g * a.data)

    return _node(a.data * b.data, (a, b), bw, "mul")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: a._accumulate(g * mask), "relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _node(s, (a,), lambda g: a._accumulate(g * s * (1.0 - s)), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _node(t, (a,), lambda g: a._accumulate(g * (1.0 - t * t)), "tanh")


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    return _node(e, (a,), lambda g: a._accumulate(g * e), "exp")


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.data), (a,), lambda g: a._accumulate(g / a.data), "log")


# -- shape / reduction -------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T, owned=True)
        if b.requires_grad:
            b._accumulate(a.data.T @ g, owned=True)

    return _node(a.data @ b.data, (a, b), bw, "matmul")


def transpose(a: Tensor) -> Tensor:
    return _node(a.data.T, (a,), lambda g: a._accumulate(g.T), "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    return _node(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)), "reshape")


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis) * (1.0 / n)


def getitem(a: Tensor, index) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        a._accumulate(full, owned=True)

    return _node(a.data[index], (a,), bw, "getitem")


def take_rows(table: Tensor, idx) -> Tensor:
    """Embedding lookup: ``table[idx]`` for an integer array of any shape."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"row index out of range for table with {table.shape[0]} rows")

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        table._accumulate(full, owned=True)

    return _node(table.data[idx], (table,), bw, "take_rows")


def pick(a: Tensor, cols) -> Tensor:
    """``a[i, cols[i]]`` for each row ``i`` of a 2-D tensor."""
    cols = np.asarray(cols, dtype=np.int64)
    rows = np.arange(a.shape[0])

    def bw(g):
        full = np.zeros_like(a.data)
        full[rows, cols] = g
        a._accumulate(full)

    return _node(a.data[rows, cols], (a,), bw, "pick")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)

    def bw(g):
        for i, t in enumerate(tensors):
            t._accumulate(np.take(g, i, axis=axis))

    return _node(np.stack([t.data for t in tensors], axis=axis), tensors, bw, "stack")


def stop_gradient(a: Tensor) -> Tensor:
    """Same values as ``a``; contributes no gradient to anything upstream."""
    out = Tensor(a.data, requires_grad=False, op="stop_gradient")
    out.stop_grad = True
    return out


# -- softmax family ----------------------------------------------------------
def _check_temperature(temperature: float) -> None:
    if not temperature > 0:
        raise ConfigurationError(f"temperature must be positive, got {temperature}")


def log_softmax(logits: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-wise ``log softmax(logits / T)`` via log-sum-exp."""
    _check_temperature(temperature)
    z = logits.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    total = e.sum(axis=-1, keepdims=True)
    out = z - np.log(total)
    p = e / total

    def bw(g):
        logits._accumulate((g - p * g.sum(axis=-1, keepdims=True)) / temperature)

    return _node(out, (logits,), bw, "log_softmax")


def log_softmax_pick(logits: Tensor, cols, temperature: float = 1.0) -> Tensor:
    """``log_softmax(logits / T)[i, cols[i]]`` without materializing the full output graph."""
    _check_temperature(temperature)
    cols = np.asarray(cols, dtype=np.int64)
    rows = np.arange(logits.shape[0])
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    if temperature != 1.0:
        z /= temperature
    e = np.exp(z)
    total = e.sum(axis=-1)
    out = z[rows, cols] - np.log(total)

    def bw(g):
        scale = g / temperature
        grad = e * (-scale / total)[:, None]
        grad[rows, cols] += scale
        logits._accumulate(grad, owned=True)

    return _node(out, (logits,), bw, "log_softmax_pick")


def softmax(logits: Tensor, temperature: float = 1.0) -> Tensor:
    return exp(log_softmax(logits, temperature))


def softmax_temperature(logits, temperature: float = 1.0) -> np.ndarray:
    """Plain numpy temperature softmax with max subtraction."""
    _check_temperature(temperature)
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def bce_with_logits(logits: Tensor, labels, weights=None) -> Tensor:
    """Elementwise logistic loss ``-[y log s(x) + (1-y) log(1-s(x))]``, optionally weighted.

    Written as ``max(x, 0) - x*y + log1p(exp(-|x|))`` so it stays finite for
    any logit.
    """
    y = np.asarray(labels, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    x = logits.data
    loss = w * (np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x))))
    s = _sigmoid(x)

    def bw(g):
        logits._accumulate(g * w * (s - y))

    return _node(loss, (logits,), bw, "bce_with_logits")
