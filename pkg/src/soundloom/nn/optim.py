"""Adam with bias correction."""

from __future__ import annotations

import numpy as np

from .params import Parameter


class Adam:
    def __init__(self, params: list[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for p in self.params:
            if p.m is None:
                p.m = np.zeros_like(p.value)
                p.v = np.zeros_like(p.value)
            g = p.grad
            p.m += (1.0 - b1) * (g - p.m)
            p.v += (1.0 - b2) * (g * g - p.v)
            m_hat = p.m / corr1
            v_hat = p.v / corr2
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
