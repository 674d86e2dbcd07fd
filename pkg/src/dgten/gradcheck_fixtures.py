"""Registered finite-difference fixtures for the gradcheck command.

Each fixture builds a small parameter set, returns a deterministic
scalar loss closure over it, and is expected to verify within 1e-4
relative error in float64.  Together they cover every trainable path:
node init, edge mapper, structural conv stack, HAGH, KAN projections,
attention, ODE field, and the prediction head.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import torch

from .errors import ConfigError
from .graphs import Snapshot, SnapshotSequence
from .numerics import ParamRegistry, Tensor, grad_check
from .structural import (
    build_structural_params,
    conv_update,
    edge_gaussian,
    init_node_gaussian,
    structural_forward,
)
from .temporal import (
    build_attention_params,
    build_hagh_params,
    build_kan_layer,
    build_ode_params,
    causal_attention,
    hagh_encode,
    kan_apply,
    ode_refine,
)
from .training import TrainConfig, weighted_bce_loss, window_instances

GRADCHECK_TOLERANCE = 1e-4


def tiny_sequence(seed: int = 7, num_nodes: int = 6, n_snapshots: int = 3) -> SnapshotSequence:
    """Small deterministic signed graph sequence for fixtures and smoke tests."""
    rng = np.random.default_rng(seed)
    snapshots = []
    for _ in range(n_snapshots):
        edges = set()
        while len(edges) < 8:
            s, t = rng.integers(num_nodes, size=2)
            if s != t:
                edges.add((int(s), int(t)))
        pairs = sorted(edges)
        ratings = rng.choice([-8, -3, 2, 5, 9], size=len(pairs))
        snapshots.append(
            Snapshot(
                trustors=np.array([p[0] for p in pairs], dtype=np.int64),
                trustees=np.array([p[1] for p in pairs], dtype=np.int64),
                ratings=ratings.astype(np.int64),
            )
        )
    return SnapshotSequence(
        num_snapshots=n_snapshots,
        slot_duration=1.0,
        t_min=0.0,
        global_node_count=num_nodes,
        snapshots=snapshots,
    )


def fixture_config(**overrides) -> TrainConfig:
    base = dict(
        d_prime=8,
        d_head=3,
        heads=2,
        layers=2,
        cheb_order=3,
        ode_steps=3,
        dropout=0.0,
        epochs=5,
        tau_cos=1.3,
        seed=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


def _readout(value: Tensor, seed: int) -> Tensor:
    g = torch.Generator().manual_seed(seed)
    weights = torch.randn(value.shape, generator=g, dtype=value.dtype)
    return (value * weights).sum()


def _structural_setup(layers: int = 2):
    registry = ParamRegistry()
    params = build_structural_params(
        registry,
        num_nodes=6,
        feature_dim=8,
        d_prime=8,
        layers=layers,
        tau_cos=1.3,
        generator=torch.Generator().manual_seed(11),
    )
    return registry, params


def fixture_node_init() -> tuple[Callable[[], Tensor], ParamRegistry]:
    registry, params = _structural_setup(layers=1)

    def loss_fn():
        emb = init_node_gaussian(params)
        return _readout(emb.mu, 21) + _readout(emb.sigma, 22)

    return loss_fn, registry


def fixture_edge_mapper() -> tuple[Callable[[], Tensor], ParamRegistry]:
    registry, params = _structural_setup(layers=2)
    ratings = torch.tensor([-10.0, -4.0, 1.0, 6.0, 10.0])

    def loss_fn():
        total = torch.zeros((), dtype=torch.float64)
        for layer in (1, 2):
            op = edge_gaussian(ratings, layer, params)
            total = total + _readout(op.mu, 31 + layer) + _readout(op.sigma, 41 + layer)
        return total

    return loss_fn, registry


def fixture_conv() -> tuple[Callable[[], Tensor], ParamRegistry]:
    registry, params = _structural_setup(layers=1)
    g = torch.Generator().manual_seed(13)
    width = 2 * params.d_prime + 2 * params.d_ell
    mu_c = torch.randn(5, width, generator=g, dtype=torch.float64)
    sigma_c = torch.rand(5, width, generator=g, dtype=torch.float64)

    def loss_fn():
        emb = conv_update(mu_c, sigma_c, 1, params)
        return _readout(emb.mu, 51) + _readout(emb.sigma, 52)

    return loss_fn, registry


def fixture_structural() -> tuple[Callable[[], Tensor], ParamRegistry]:
    registry, params = _structural_setup(layers=2)
    snapshot = tiny_sequence().snapshots[0]

    def loss_fn():
        emb = structural_forward(snapshot, params)
        return _readout(emb.mu, 61) + _readout(emb.sigma, 62)

    return loss_fn, registry


def fixture_hagh() -> tuple[Callable[[], Tensor], ParamRegistry]:
    registry = ParamRegistry()
    params = build_hagh_params(registry, horizon=4, d_prime=8, generator=torch.Generator().manual_seed(5))
    with torch.no_grad():
        params.w_gauss.add_(torch.randn(8, generator=torch.Generator().manual_seed(6), dtype=torch.float64))
        params.w_hour.add_(torch.randn(8, generator=torch.Generator().manual_seed(7), dtype=torch.float64))

    def loss_fn():
        return _readout(hagh_encode(4, params), 71)

    return loss_fn, registry


def fixture_kan() -> tuple[Callable[[], Tensor], ParamRegistry]:
    registry = ParamRegistry()
    layer = build_kan_layer(registry, "kan", 5, 4, 3, torch.Generator().manual_seed(9))
    g = torch.Generator().manual_seed(10)
    v = torch.randn(7, 5, generator=g, dtype=torch.float64)

    def loss_fn():
        return _readout(kan_apply(v, layer), 81)

    return loss_fn, registry


def fixture_attention() -> tuple[Callable[[], Tensor], ParamRegistry]:
    registry = ParamRegistry()
    params = build_attention_params(
        registry, d_prime=8, heads=2, d_head=3, order=3, dropout=0.0,
        generator=torch.Generator().manual_seed(15),
    )
    g = torch.Generator().manual_seed(16)
    z_in = torch.randn(4, 3, 8, generator=g, dtype=torch.float64)

    def loss_fn():
        return _readout(causal_attention(z_in, params), 91)

    return loss_fn, registry


def fixture_ode() -> tuple[Callable[[], Tensor], ParamRegistry]:
    registry = ParamRegistry()
    params = build_ode_params(registry, d_prime=8, steps=3, generator=torch.Generator().manual_seed(17))
    g = torch.Generator().manual_seed(18)
    x = torch.randn(4, 3, 8, generator=g, dtype=torch.float64)
    h_temp = torch.randn(4, 3, 8, generator=g, dtype=torch.float64)

    def loss_fn():
        return _readout(ode_refine(x, h_temp, params), 101)

    return loss_fn, registry


def fixture_head() -> tuple[Callable[[], Tensor], ParamRegistry]:
    registry = ParamRegistry()
    g = torch.Generator().manual_seed(19)
    w = registry.register("head.w", torch.randn(1, 16, generator=g, dtype=torch.float64) * 0.25)
    b = registry.register("head.b", torch.zeros(1))
    z = torch.randn(6, 2, 8, generator=g, dtype=torch.float64)
    src = torch.tensor([0, 1, 2, 3])
    dst = torch.tensor([1, 2, 3, 4])
    slot = torch.tensor([0, 1, 0, 1])

    def loss_fn():
        pair = torch.cat([z[src, slot], z[dst, slot]], dim=-1)
        logits = (pair @ w.T + b).squeeze(-1)
        return _readout(logits, 111)

    return loss_fn, registry


def fixture_full() -> tuple[Callable[[], Tensor], ParamRegistry]:
    """Complete training objective on a 6-node, 3-snapshot fixture."""
    from .model import TrustModel

    sequence = tiny_sequence()
    config = fixture_config()
    model = TrustModel(sequence.global_node_count, 3, config, seed=3)
    instances = window_instances(sequence, 3)
    trustors = np.array([i.trustor for i in instances], dtype=np.int64)
    trustees = np.array([i.trustee for i in instances], dtype=np.int64)
    slots = np.array([i.slot for i in instances], dtype=np.int64)
    labels = torch.tensor([i.label for i in instances], dtype=torch.float64)
    weights = torch.tensor([i.weight for i in instances], dtype=torch.float64)

    def loss_fn():
        result = model.forward(sequence.snapshots, training=False)
        logits = model.edge_logits(result.z, trustors, trustees, slots)
        return weighted_bce_loss(logits, labels, weights, model.registry, config.weight_decay)

    return loss_fn, model.registry


FIXTURES: dict[str, Callable[[], tuple[Callable[[], Tensor], ParamRegistry]]] = {
    "node-init": fixture_node_init,
    "edge-mapper": fixture_edge_mapper,
    "conv": fixture_conv,
    "structural": fixture_structural,
    "hagh": fixture_hagh,
    "kan": fixture_kan,
    "attention": fixture_attention,
    "ode": fixture_ode,
    "head": fixture_head,
    "full": fixture_full,
}


def run_fixture(name: str, coords_per_param: int = 12) -> float:
    if name not in FIXTURES:
        raise ConfigError(f"unknown gradcheck fixture {name!r}; known: {sorted(FIXTURES)}")
    loss_fn, registry = FIXTURES[name]()
    return grad_check(loss_fn, registry, coords_per_param=coords_per_param)


def run_all(coords_per_param: int = 12) -> dict[str, float]:
    return {name: run_fixture(name, coords_per_param) for name in FIXTURES}
