"""Trainable parameters and the Adam update."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteGradient
from . import tensor as T
from .tensor import Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Param:
    """A trainable array with its gradient buffer and Adam moments."""

    __slots__ = ("name", "value", "grad", "adam_m", "adam_v", "step_count")

    def __init__(self, value, name=""):
        value = np.array(value, dtype=np.float64, copy=True)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.adam_m = np.zeros_like(value)
        self.adam_v = np.zeros_like(value)
        self.step_count = 0

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def leaf(self) -> Tensor:
        """A graph leaf reading the current value; backward feeds ``grad``."""
        if not T.grad_enabled():
            return Tensor(self.value)
        return Tensor(self.value, param=self)

    def zero_grad(self):
        self.grad[...] = 0.0

    def reset_optimizer(self):
        self.adam_m[...] = 0.0
        self.adam_v[...] = 0.0
        self.step_count = 0

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


def adam_step(p: Param, lr: float, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """Bias-corrected Adam update of ``p.value`` in place; clears ``p.grad``."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    g = p.grad
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient(f"non-finite gradient in {p.name or 'parameter'}")
    p.step_count += 1
    t = p.step_count
    p.adam_m *= beta1
    p.adam_m += (1.0 - beta1) * g
    p.adam_v *= beta2
    p.adam_v += (1.0 - beta2) * (g * g)
    m_hat = p.adam_m / (1.0 - beta1**t)
    v_hat = p.adam_v / (1.0 - beta2**t)
    p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    p.grad[...] = 0.0


class Adam:
    """Applies :func:`adam_step` to a fixed list of parameters."""

    def __init__(self, params, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradient(f"non-finite gradient in {p.name}")
        for p in self.params:
            adam_step(p, self.lr, self.beta1, self.beta2, self.eps)
