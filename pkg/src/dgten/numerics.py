"""Differentiable-numerics substrate.

Tensors and reverse-mode gradients come from torch; everything the model
actually computes with them (Chebyshev bases, fixed-step integration,
the finite-difference verifier) lives here.  All training and testing
defaults to float64; float32 is an opt-in speed mode.
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np
import torch

from .errors import ConfigError, IntegrationError

Tensor = torch.Tensor

DTYPES = {"float64": torch.float64, "float32": torch.float32}


def resolve_dtype(name: str) -> torch.dtype:
    try:
        return DTYPES[name]
    except KeyError:
        raise ConfigError(f"unknown dtype {name!r}; expected one of {sorted(DTYPES)}")


class ParamRegistry:
    """Named trainable tensors plus their gradient slots.

    Every trainable tensor is registered exactly once; registration
    detaches the value, casts it to the registry dtype and turns
    gradient tracking on.
    """

    def __init__(self, dtype: torch.dtype = torch.float64):
        self.dtype = dtype
        self._params: dict[str, Tensor] = {}

    def register(self, name: str, value: Tensor) -> Tensor:
        if name in self._params:
            raise ConfigError(f"parameter {name!r} registered twice")
        param = value.detach().clone().to(self.dtype).requires_grad_(True)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def l2_penalty(self) -> Tensor:
        total = torch.zeros((), dtype=self.dtype)
        for p in self._params.values():
            total = total + (p * p).sum()
        return total

    def state_dict(self) -> dict[str, Tensor]:
        return {name: p.detach().clone() for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, Tensor]) -> None:
        for name, value in state.items():
            p = self._params[name]
            if tuple(p.shape) != tuple(value.shape):
                raise ConfigError(f"shape mismatch for {name!r}")
            with torch.no_grad():
                p.copy_(value.to(self.dtype))


def chebyshev_basis(v: Tensor, order: int) -> Tensor:
    """Chebyshev polynomials [T_0(v), ..., T_order(v)] stacked on a new last dim.

    Uses the recurrence T_k = 2 v T_{k-1} - T_{k-2}; the caller is
    responsible for keeping v inside [-1, 1].
    """
    if order < 0:
        raise ConfigError("Chebyshev order must be >= 0")
    terms = [torch.ones_like(v)]
    if order >= 1:
        terms.append(v)
    for _ in range(2, order + 1):
        terms.append(2.0 * v * terms[-1] - terms[-2])
    return torch.stack(terms, dim=-1)


def rk4_integrate(initial: Tensor, field: Callable[[Tensor], Tensor], steps: int) -> Tensor:
    """Classical fourth-order Runge-Kutta over virtual time [0, 1].

    The field is autonomous and applied to the whole state tensor;
    gradients flow through every stage.
    """
    if steps < 1:
        raise ConfigError("rk4_integrate needs at least one step")
    h = 1.0 / steps
    y = initial
    for step in range(steps):
        k1 = field(y)
        k2 = field(y + (0.5 * h) * k1)
        k3 = field(y + (0.5 * h) * k2)
        k4 = field(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not torch.isfinite(y).all():
            raise IntegrationError(f"non-finite state after RK4 step {step + 1}/{steps}")
    return y


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: ParamRegistry,
    epsilon: float = 1e-5,
    coords_per_param: int = 20,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must be a deterministic closure over the registered
    parameters.  A random coordinate subset of each parameter is probed;
    the error is |a - n| / max(|a|, |n|, 1e-8).
    """
    params.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in params.items()
    }

    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        for name, p in params.items():
            flat = p.data.view(-1)
            count = min(coords_per_param, flat.numel())
            idxs = rng.choice(flat.numel(), size=count, replace=False)
            grads = analytic[name].view(-1)
            for i in idxs:
                original = flat[i].item()
                flat[i] = original + epsilon
                up = float(loss_fn())
                flat[i] = original - epsilon
                down = float(loss_fn())
                flat[i] = original
                numeric = (up - down) / (2.0 * epsilon)
                a = float(grads[i])
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, rel)
    params.zero_grad()
    return worst


def derive_seed(seed: int, *keys) -> int:
    """Stable per-stream seed derived from a base seed and context keys."""
    import hashlib

    text = ":".join([str(seed)] + [str(k) for k in keys])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % (2**63 - 1)
