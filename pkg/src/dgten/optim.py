"""Momentumized dual-averaging optimizer (MADGRAD update rule)."""

from __future__ import annotations

import math

import torch

from .numerics import ParamRegistry, Tensor


class Madgrad:
    """Full-batch MADGRAD over a parameter registry.

    Per step k (0-based) with lamb = lr * sqrt(k + 1):
        s  += lamb * g
        nu += lamb * g * g
        z   = x0 - s / (nu^(1/3) + eps)
        x   = momentum * x + (1 - momentum) * z

    Weight decay is not applied here; the training loss already carries
    its own L2 term.
    """

    def __init__(
        self,
        params: ParamRegistry,
        lr: float = 0.005,
        momentum: float = 0.9,
        eps: float = 1e-6,
    ):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.eps = eps
        self.step_count = 0
        self._s: dict[str, Tensor] = {}
        self._nu: dict[str, Tensor] = {}
        self._x0: dict[str, Tensor] = {}
        for name, p in params.items():
            self._s[name] = torch.zeros_like(p)
            self._nu[name] = torch.zeros_like(p)
            self._x0[name] = p.detach().clone()

    @torch.no_grad()
    def step(self) -> None:
        lamb = self.lr * math.sqrt(self.step_count + 1)
        ck = 1.0 - self.momentum
        for name, p in self.params.items():
            grad = p.grad
            if grad is None:
                continue
            s = self._s[name]
            nu = self._nu[name]
            s.add_(grad, alpha=lamb)
            nu.add_(grad * grad, alpha=lamb)
            z = self._x0[name] - s / (nu.pow(1.0 / 3.0) + self.eps)
            p.data.mul_(1.0 - ck).add_(z, alpha=ck)
        self.step_count += 1
