"""Full trust-evaluation model: structural stack, temporal refinement, edge head."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import torch

from .errors import NodeLookupError
from .graphs import Snapshot
from .numerics import ParamRegistry, Tensor, resolve_dtype
from .structural import StructuralParams, build_structural_params, structural_forward
from .temporal import (
    AttentionParams,
    HaghParams,
    OdeParams,
    build_attention_params,
    build_hagh_params,
    build_ode_params,
    temporal_forward,
)

if TYPE_CHECKING:
    from .training import TrainConfig


@dataclass
class ForwardResult:
    z: Tensor            # (N, T, d') final node embeddings
    sigma_stack: Tensor  # (N, T, d') structural uncertainty per snapshot


class TrustModel:
    """All trainable state for one training horizon, built from a seed."""

    def __init__(self, num_nodes: int, horizon: int, config: "TrainConfig", seed: int):
        self.num_nodes = num_nodes
        self.horizon = horizon
        self.config = config
        self.seed = seed
        dtype = resolve_dtype(config.dtype)
        self.registry = ParamRegistry(dtype=dtype)

        generator = torch.Generator().manual_seed(seed)
        self.structural: StructuralParams = build_structural_params(
            self.registry,
            num_nodes,
            feature_dim=config.d_prime,
            d_prime=config.d_prime,
            layers=config.layers,
            sigma_min=config.sigma_min,
            epsilon=config.epsilon,
            tau_cos=config.tau_cos,
            dropout=config.dropout,
            raeca_enabled=config.raeca,
            generator=generator,
        )
        self.hagh: HaghParams = build_hagh_params(
            self.registry, horizon, config.d_prime, generator
        )
        self.attention: AttentionParams = build_attention_params(
            self.registry,
            config.d_prime,
            config.heads,
            config.d_head,
            config.cheb_order,
            config.dropout,
            generator,
        )
        self.ode: OdeParams = build_ode_params(
            self.registry, config.d_prime, config.ode_steps, generator
        )
        head_scale = 1.0 / math.sqrt(2 * config.d_prime)
        self.head_w = self.registry.register(
            "head.w",
            torch.randn(1, 2 * config.d_prime, generator=generator, dtype=torch.float64)
            * head_scale,
        )
        self.head_b = self.registry.register("head.b", torch.zeros(1))
        self._dropout_generator = torch.Generator().manual_seed(seed + 1)

    def forward(self, snapshots: list[Snapshot], training: bool = False) -> ForwardResult:
        """Embed every snapshot structurally, then refine across time."""
        generator = self._dropout_generator if training else None
        mus = []
        sigmas = []
        for snap in snapshots:
            emb = structural_forward(
                snap, self.structural, training=training, generator=generator
            )
            mus.append(emb.mu)
            sigmas.append(emb.sigma)
        x = torch.stack(mus, dim=1)
        sigma_stack = torch.stack(sigmas, dim=1)
        z = temporal_forward(
            x, self.hagh, self.attention, self.ode, training=training, generator=generator
        )
        return ForwardResult(z=z, sigma_stack=sigma_stack)

    def edge_logits(
        self, z: Tensor, trustors: np.ndarray, trustees: np.ndarray, slots: np.ndarray
    ) -> Tensor:
        """Scalar distrust logits for (trustor, trustee) pairs at given slots.

        Higher logits mean more Distrust-likely.  Slots beyond the trained
        horizon are clamped by the caller to the last trained slot.
        """
        for arr in (trustors, trustees):
            if arr.size and (arr.min() < 0 or arr.max() >= self.num_nodes):
                raise NodeLookupError("node id outside the global index")
        src = torch.from_numpy(np.ascontiguousarray(trustors))
        dst = torch.from_numpy(np.ascontiguousarray(trustees))
        t = torch.from_numpy(np.ascontiguousarray(slots))
        pair = torch.cat([z[src, t], z[dst, t]], dim=-1)
        return (pair @ self.head_w.T + self.head_b).squeeze(-1)

    def state_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "horizon": self.horizon,
            "seed": self.seed,
            "params": self.registry.state_dict(),
        }

    def load_state_dict(self, state: dict) -> None:
        self.registry.load_state_dict(state["params"])
