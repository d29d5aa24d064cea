"""Full-batch Adam with optional L2 weight decay folded into the gradient."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, DimensionError


class Adam:
    """Adam with bias correction over a fixed list of parameter tensors.

    ``weight_decay`` adds wd * theta to the gradient before the moment
    update, realizing an L2 penalty on all parameters without an explicit
    loss term.
    """

    def __init__(self, params: Sequence[Tensor], learning_rate: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8,
                 weight_decay: float = 0.0):
        if not params:
            raise ContractError("Adam needs at least one parameter")
        for p in params:
            if not p.requires_grad:
                raise ContractError("Adam parameters must have requires_grad set")
        self.params = list(params)
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for i, p in enumerate(self.params):
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.values)
            if grad.shape != p.values.shape:
                raise DimensionError(
                    f"Adam: gradient {grad.shape} vs parameter {p.values.shape}")
            if self.weight_decay:
                grad = grad + self.weight_decay * p.values
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            p.values -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
