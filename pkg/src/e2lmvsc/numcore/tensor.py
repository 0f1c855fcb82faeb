"""A minimal reverse-mode automatic differentiation engine over numpy.

Every value is a float64 ``ndarray`` of rank 0, 1 or 2. Graph nodes record
their parents and a closure that pushes the upstream gradient into them;
``Tensor.backward`` walks the graph in reverse topological order. Leaves
bound to a :class:`~e2lmvsc.numcore.optim.Param` accumulate into
``Param.grad`` when the pass finishes.
"""

from __future__ import annotations

import contextlib

import numpy as np
import scipy.linalg

from .linalg import cholesky_lower, softmax_rows as _softmax_rows

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph; leaves built inside are constants."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "param")

    def __init__(self, data, requires_grad=False, param=None, _parents=(), _backward=None):
        if type(data) is not np.ndarray or data.dtype != np.float64:
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad or param is not None
        self._parents = _parents
        self._backward = _backward
        self.param = param

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        return float(self.data.item())

    def __float__(self):
        return float(self.data.item())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(as_tensor(other), self)

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf."""
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(order):
            if node.grad is None:
                continue
            if node._backward is not None:
                node._backward(node.grad)
            if node.param is not None:
                node.param.grad += node.grad


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g):
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _node(data, parents, backward):
    if not _grad_enabled:
        return Tensor(data)
    parents = tuple(p for p in parents if p.requires_grad)
    if not parents:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)


# -- elementwise -------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _node(a.data + b.data, (a, b), backward)


def neg(a):
    def backward(g):
        _accum(a, -g)

    return _node(-a.data, (a,), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _node(a.data * b.data, (a, b), backward)


def reciprocal(a):
    out = 1.0 / a.data

    def backward(g):
        _accum(a, -g * out * out)

    return _node(out, (a,), backward)


def square(a):
    def backward(g):
        _accum(a, 2.0 * g * a.data)

    return _node(a.data * a.data, (a,), backward)


def exp(a):
    out = np.exp(a.data)

    def backward(g):
        _accum(a, g * out)

    return _node(out, (a,), backward)


def log(a):
    def backward(g):
        _accum(a, g / a.data)

    return _node(np.log(a.data), (a,), backward)


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def backward(g):
        _accum(a, g * out * (1.0 - out))

    return _node(out, (a,), backward)


def softplus(a):
    x = a.data
    out = np.logaddexp(0.0, x)

    def backward(g):
        _accum(a, g * 0.5 * (1.0 + np.tanh(0.5 * x)))

    return _node(out, (a,), backward)


def clamp(a, lo, hi):
    """Clip to [lo, hi]; gradient passes only where the input is inside."""
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        _accum(a, g * inside)

    return _node(np.clip(a.data, lo, hi), (a,), backward)


def soft_threshold(x, theta):
    """sign(x) * max(0, |x| - theta) with ``theta`` a scalar tensor."""
    x, theta = as_tensor(x), as_tensor(theta)
    live = np.abs(x.data) > theta.data
    sgn = np.sign(x.data)
    out = np.where(live, sgn * (np.abs(x.data) - theta.data), 0.0)

    def backward(g):
        _accum(x, g * live)
        _accum(theta, -np.sum(g * sgn * live))

    return _node(out, (x, theta), backward)


# -- reductions and shape ------------------------------------------------------

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    shape = a.data.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, shape))

    return _node(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None):
    count = a.data.size if axis is None else a.data.shape[axis]
    return sum(a, axis=axis) * (1.0 / count)


def transpose(a):
    def backward(g):
        _accum(a, g.T)

    return _node(a.data.T, (a,), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), backward)


def affine(W, x, b):
    """W @ x + b with a column bias; one graph node instead of three."""
    W, x, b = as_tensor(W), as_tensor(x), as_tensor(b)

    def backward(g):
        if W.requires_grad:
            _accum(W, g @ x.data.T)
        if x.requires_grad:
            _accum(x, W.data.T @ g)
        if b.requires_grad:
            _accum(b, g.sum(axis=1, keepdims=True))

    return _node(W.data @ x.data + b.data, (W, x, b), backward)


def vstack(parts):
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[lo:hi])

    return _node(np.vstack([p.data for p in parts]), parts, backward)


def take_cols(a, idx):
    idx = np.asarray(idx, dtype=np.intp)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (slice(None), idx), g)
        _accum(a, full)

    return _node(a.data[:, idx], (a,), backward)


def softmax_rows(a):
    out = _softmax_rows(a.data)

    def backward(g):
        _accum(a, out * (g - np.sum(g * out, axis=1, keepdims=True)))

    return _node(out, (a,), backward)


# -- linear algebra ------------------------------------------------------------

def logdet_spd(a):
    """ln det of an SPD matrix; the gradient is the (symmetric) inverse."""
    L = cholesky_lower(a.data)
    value = 2.0 * np.sum(np.log(np.diag(L)))

    def backward(g):
        inv = scipy.linalg.cho_solve((L, True), np.eye(L.shape[0]), check_finite=False)
        _accum(a, g * inv)

    return _node(value, (a,), backward)
