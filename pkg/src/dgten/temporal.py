"""Temporal refinement over stacked per-snapshot embeddings.

The (N, T, d') tensor of structural means is enriched with a hybrid
absolute / Gaussian / hourglass positional encoding, passed through
causal multi-head attention whose q/k/v and output projections are
Chebyshev-KAN layers, and corrected by an ODE-refined residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ValidationError
from .numerics import ParamRegistry, Tensor, chebyshev_basis, rk4_integrate


@dataclass
class HaghParams:
    """Learned absolute table plus trainable Gaussian and hourglass envelopes."""

    table: Tensor        # (T_max, d')
    gauss_center: Tensor  # scalar
    gauss_width_raw: Tensor  # scalar, width = softplus(raw) > 0
    w_gauss: Tensor      # (d',)
    w_hour: Tensor       # (d',)

    @property
    def t_max(self) -> int:
        return self.table.shape[0]

    @property
    def gauss_width(self) -> Tensor:
        return torch.nn.functional.softplus(self.gauss_width_raw)


@dataclass
class KanLayer:
    """Learnable coefficients over a Chebyshev basis of the tanh-normalized input."""

    theta: Tensor  # (d_in, d_out, K+1)
    order: int


@dataclass
class AttentionParams:
    heads: int
    d_head: int
    query: KanLayer   # d' -> heads * d_head, per-head blocks stacked
    key: KanLayer
    value: KanLayer
    output: KanLayer  # heads * d_head -> d'
    dropout: float


@dataclass
class OdeParams:
    """Two-layer tanh perceptron vector field and fixed RK4 step count."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    steps: int

    def field(self, h: Tensor) -> Tensor:
        return torch.tanh(h @ self.w1.T + self.b1) @ self.w2.T + self.b2


def build_hagh_params(
    registry: ParamRegistry,
    horizon: int,
    d_prime: int,
    generator: torch.Generator | None = None,
) -> HaghParams:
    table = torch.randn(horizon, d_prime, generator=generator, dtype=torch.float64) * 0.02
    width0 = max(horizon / 4.0, 0.5)
    raw0 = math.log(math.expm1(width0))  # softplus inverse
    return HaghParams(
        table=registry.register("hagh.table", table),
        gauss_center=registry.register("hagh.center", torch.tensor((horizon - 1) / 2.0)),
        gauss_width_raw=registry.register("hagh.width", torch.tensor(raw0)),
        w_gauss=registry.register("hagh.w_gauss", torch.zeros(d_prime)),
        w_hour=registry.register("hagh.w_hour", torch.zeros(d_prime)),
    )


def build_kan_layer(
    registry: ParamRegistry,
    name: str,
    d_in: int,
    d_out: int,
    order: int,
    generator: torch.Generator | None = None,
) -> KanLayer:
    scale = 1.0 / (d_in * (order + 1))
    theta = torch.randn(d_in, d_out, order + 1, generator=generator, dtype=torch.float64) * scale
    return KanLayer(theta=registry.register(name, theta), order=order)


def build_attention_params(
    registry: ParamRegistry,
    d_prime: int,
    heads: int,
    d_head: int,
    order: int,
    dropout: float,
    generator: torch.Generator | None = None,
) -> AttentionParams:
    wide = heads * d_head
    return AttentionParams(
        heads=heads,
        d_head=d_head,
        query=build_kan_layer(registry, "attn.q", d_prime, wide, order, generator),
        key=build_kan_layer(registry, "attn.k", d_prime, wide, order, generator),
        value=build_kan_layer(registry, "attn.v", d_prime, wide, order, generator),
        output=build_kan_layer(registry, "attn.out", wide, d_prime, order, generator),
        dropout=dropout,
    )


def build_ode_params(
    registry: ParamRegistry,
    d_prime: int,
    steps: int,
    generator: torch.Generator | None = None,
) -> OdeParams:
    scale = 1.0 / math.sqrt(d_prime)
    return OdeParams(
        w1=registry.register("ode.w1", torch.randn(d_prime, d_prime, generator=generator, dtype=torch.float64) * scale),
        b1=registry.register("ode.b1", torch.zeros(d_prime)),
        w2=registry.register("ode.w2", torch.randn(d_prime, d_prime, generator=generator, dtype=torch.float64) * scale),
        b2=registry.register("ode.b2", torch.zeros(d_prime)),
        steps=steps,
    )


def hagh_encode(horizon: int, params: HaghParams) -> Tensor:
    """Positional vectors p_t for t = 0..horizon-1, shape (horizon, d').

    p_t = table[t] + exp(-(t - center)^2 / (2 width^2)) * w_gauss
        + (1 - 2 |t - c| / (T - 1)) * w_hour  with c = (T - 1) / 2.
    A single-slot horizon uses hourglass factor 1.
    """
    if horizon > params.t_max:
        raise ValidationError(f"horizon {horizon} exceeds table size {params.t_max}")
    dtype = params.table.dtype
    t = torch.arange(horizon, dtype=dtype)
    width = params.gauss_width
    gauss = torch.exp(-((t - params.gauss_center) ** 2) / (2.0 * width * width))
    c = (horizon - 1) / 2.0
    if horizon == 1:
        hour = torch.ones(1, dtype=dtype)
    else:
        hour = 1.0 - 2.0 * (t - c).abs() / (horizon - 1)
    return params.table[:horizon] + gauss.unsqueeze(-1) * params.w_gauss + hour.unsqueeze(-1) * params.w_hour


def kan_apply(v_in: Tensor, layer: KanLayer) -> Tensor:
    """Sum of per-input Chebyshev expansions: out_o = sum_i sum_k theta[i,o,k] T_k(tanh v_i)."""
    basis = chebyshev_basis(torch.tanh(v_in), layer.order)
    return torch.einsum("...ik,iok->...o", basis, layer.theta)


def causal_attention(
    z_in: Tensor,
    params: AttentionParams,
    *,
    training: bool = False,
    generator: torch.Generator | None = None,
) -> Tensor:
    """Per-node multi-head attention over past slots with a KAN output and residual."""
    n, t, _ = z_in.shape
    h, dh = params.heads, params.d_head
    q = kan_apply(z_in, params.query).view(n, t, h, dh)
    k = kan_apply(z_in, params.key).view(n, t, h, dh)
    v = kan_apply(z_in, params.value).view(n, t, h, dh)

    scores = torch.einsum("nthd,nshd->nhts", q, k) / math.sqrt(dh)
    future = torch.triu(torch.ones(t, t, dtype=torch.bool), diagonal=1)
    scores = scores.masked_fill(future, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    if training and params.dropout > 0.0:
        keep = (
            torch.rand(weights.shape, generator=generator, dtype=weights.dtype) >= params.dropout
        ).to(weights.dtype)
        weights = weights * keep / (1.0 - params.dropout)

    summary = torch.einsum("nhts,nshd->nthd", weights, v).reshape(n, t, h * dh)
    return kan_apply(summary, params.output) + z_in


def attention_weights(z_in: Tensor, params: AttentionParams) -> Tensor:
    """Eval-mode attention weights, shape (N, H, T, T); rows over s <= t sum to 1."""
    n, t, _ = z_in.shape
    h, dh = params.heads, params.d_head
    q = kan_apply(z_in, params.query).view(n, t, h, dh)
    k = kan_apply(z_in, params.key).view(n, t, h, dh)
    scores = torch.einsum("nthd,nshd->nhts", q, k) / math.sqrt(dh)
    future = torch.triu(torch.ones(t, t, dtype=torch.bool), diagonal=1)
    return torch.softmax(scores.masked_fill(future, float("-inf")), dim=-1)


def ode_refine(x: Tensor, h_temp: Tensor, params: OdeParams) -> Tensor:
    """Integrate the residual x - h_temp through the learned field and add it back."""
    if x.shape != h_temp.shape:
        raise ValidationError("residual inputs must share a shape")
    residual = (x - h_temp).reshape(-1, x.shape[-1])
    refined = rk4_integrate(residual, params.field, params.steps)
    return h_temp + refined.reshape(x.shape)


def temporal_forward(
    x: Tensor,
    hagh: HaghParams,
    attention: AttentionParams,
    ode: OdeParams,
    *,
    training: bool = False,
    generator: torch.Generator | None = None,
) -> Tensor:
    """Positional encoding, causal KAN attention, then ODE residual refinement."""
    horizon = x.shape[1]
    p = hagh_encode(horizon, hagh)
    z_in = x + p.unsqueeze(0)
    h_temp = causal_attention(z_in, attention, training=training, generator=generator)
    return ode_refine(x, h_temp, ode)
