"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import StateError


class Adam:
    """Classic Adam with bias correction; state is keyed by parameter name.

    ``step`` consumes the gradients: every parameter's ``grad`` is reset
    to None afterwards, so a missing gradient on the next step fails
    loudly instead of silently reusing a stale one.
    """

    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0.0:
            raise StateError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        # bias-corrected step size, folded into one scalar
        alpha = self.lr * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for name, p in self.params.items():
            if p.grad is None:
                raise StateError(f"step() before backward: no gradient for '{name}'")
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p.data -= (np.float32(alpha) * m / (np.sqrt(v) + np.float32(self.eps)))
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
