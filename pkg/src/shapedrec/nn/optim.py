"""Adam optimizer over a ``ParamStore``."""
from __future__ import annotations

import numpy as np

from ..errors import TrainingError
from .params import ParamStore


def adam_step(
    params: ParamStore,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    maximize: bool = False,
) -> list[str]:
    """Apply one bias-corrected Adam update and clear gradients.

    Only parameters holding a gradient are updated. All gradients are
    checked for finiteness before any parameter is touched. Returns the
    names of the updated parameters.
    """
    live = [(n, p) for n, p in params.items() if p.grad is not None]
    for name, p in live:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    sign = 1.0 if maximize else -1.0
    for name, p in live:
        g = p.grad
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params.t[name] += 1
        t = params.t[name]
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data = p.data + sign * learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    params.zero_grad()
    return [n for n, _ in live]


class Adam:
    def __init__(self, params: ParamStore, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def step(self) -> list[str]:
        return adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps)
