"""Adam with bias correction, plus the non-finite-gradient guard."""

from __future__ import annotations

import numpy as np

from .errors import TrainingAborted
from .tensor import Tensor

__all__ = ["Adam"]


class Adam:
    """Standard Adam: decaying first/second moment estimates, bias-corrected step.

    The update is lr * m_hat / (sqrt(v_hat) + eps); under a constant gradient
    the step size approaches lr * sign(g). A non-finite gradient aborts
    training with the offending parameter named, since continuing would poison
    the moments.
    """

    def __init__(
        self,
        params: list[tuple[str, Tensor]],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for _, p in self.params]
        self._v = [np.zeros_like(p.data) for _, p in self.params]

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, (name, p) in enumerate(self.params):
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise TrainingAborted(f"non-finite gradient in parameter {name!r} at step {self.t}")
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self._m[i] / bc1
            v_hat = self._v[i] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
