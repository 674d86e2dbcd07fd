"""Per-snapshot uncertainty-aware graph convolution.

Nodes and edges are carried as Gaussian (mu, sigma) pairs with no
sampling anywhere.  Each of the L layers recomputes edge opinions from
raw labels, derives defensive coefficients from the previous layer's
means, aggregates trustee- and trustor-side messages, and applies a
shared linear update with ReLU-gated uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ValidationError
from .graphs import Snapshot
from .numerics import ParamRegistry, Tensor

JACCARD_PRUNE_THRESHOLD = 0.05
SELF_LOOP_WEIGHT = 1.0


@dataclass
class GaussianEmbedding:
    """Per-node mean and non-negative standard deviation, (N, d') each."""

    mu: Tensor
    sigma: Tensor


@dataclass
class EdgeOpinion:
    """Per-edge Gaussian opinion recomputed from raw labels at every layer."""

    mu: Tensor     # (E, d_ell)
    sigma: Tensor  # (E, d_ell)


@dataclass
class DefensiveCoefficients:
    """Sparse message-passing weights over in-edges plus diagonal self-loops.

    ``edge_alpha[e]`` weighs edge e from the receiving (trustee) node's
    view; ``self_alpha[i]`` is the normalized self-loop share.  For every
    node the in-edge weights plus the self weight sum to 1 (within the
    stabilizer epsilon); pruned edges carry exactly 0.
    """

    edge_alpha: Tensor        # (E,)
    self_alpha: Tensor        # (N,)
    pruned_in_degree: Tensor  # (N,), D' after pruning


@dataclass
class GaussianMapParams:
    """One sinusoidal feature map followed by mean / log-variance heads."""

    freq_w: Tensor
    freq_b: Tensor
    mu_w: Tensor
    mu_b: Tensor
    sigma_w: Tensor
    sigma_b: Tensor


@dataclass
class StructuralParams:
    """All structural-layer tensors plus its fixed constants."""

    x: Tensor                          # (N, f) raw node feature table, trainable
    proj_w: Tensor | None              # (d', f) when f != d', else None
    proj_b: Tensor | None
    node_map: GaussianMapParams
    edge_maps: list[GaussianMapParams]  # one per layer, stateless across layers
    conv_w: list[Tensor]                # (d', 2 d' + 2 d_ell) per layer
    conv_b: list[Tensor]
    d_prime: int
    d_ell: int
    layers: int
    sigma_min: float
    epsilon: float
    tau_cos: float
    dropout: float
    raeca_enabled: bool = True


def build_structural_params(
    registry: ParamRegistry,
    num_nodes: int,
    *,
    feature_dim: int = 32,
    d_prime: int = 32,
    d_ell: int | None = None,
    layers: int = 3,
    sigma_min: float = 1e-4,
    epsilon: float = 1e-8,
    tau_cos: float = 1.3,
    dropout: float = 0.0,
    raeca_enabled: bool = True,
    generator: torch.Generator | None = None,
) -> StructuralParams:
    if d_prime % 2 != 0:
        raise ValidationError("d' must be even for the cos/sin feature map")
    d_ell = d_prime if d_ell is None else d_ell
    if d_ell % 2 != 0:
        raise ValidationError("edge embedding width must be even")

    def randn(*shape, scale=1.0):
        t = torch.randn(*shape, generator=generator, dtype=torch.float64)
        return t * scale

    x = registry.register("node.x", randn(num_nodes, feature_dim, scale=0.1))
    if feature_dim != d_prime:
        proj_w = registry.register(
            "node.proj.w", randn(d_prime, feature_dim, scale=1.0 / math.sqrt(feature_dim))
        )
        proj_b = registry.register("node.proj.b", torch.zeros(d_prime))
    else:
        proj_w = None
        proj_b = None

    def gaussian_map(prefix: str, in_dim: int, out_dim: int) -> GaussianMapParams:
        half = out_dim // 2
        return GaussianMapParams(
            freq_w=registry.register(f"{prefix}.freq.w", randn(half, in_dim)),
            freq_b=registry.register(f"{prefix}.freq.b", randn(half, scale=0.1)),
            mu_w=registry.register(f"{prefix}.mu.w", randn(out_dim, out_dim, scale=1.0 / math.sqrt(out_dim))),
            mu_b=registry.register(f"{prefix}.mu.b", torch.zeros(out_dim)),
            sigma_w=registry.register(f"{prefix}.sigma.w", randn(out_dim, out_dim, scale=1.0 / math.sqrt(out_dim))),
            sigma_b=registry.register(f"{prefix}.sigma.b", torch.zeros(out_dim)),
        )

    node_map = gaussian_map("node", d_prime, d_prime)
    edge_maps = [gaussian_map(f"edge{k}", 1, d_ell) for k in range(1, layers + 1)]

    concat_dim = 2 * d_prime + 2 * d_ell
    conv_w = []
    conv_b = []
    for k in range(1, layers + 1):
        conv_w.append(
            registry.register(f"conv{k}.w", randn(d_prime, concat_dim, scale=1.0 / math.sqrt(concat_dim)))
        )
        conv_b.append(registry.register(f"conv{k}.b", torch.zeros(d_prime)))

    return StructuralParams(
        x=x,
        proj_w=proj_w,
        proj_b=proj_b,
        node_map=node_map,
        edge_maps=edge_maps,
        conv_w=conv_w,
        conv_b=conv_b,
        d_prime=d_prime,
        d_ell=d_ell,
        layers=layers,
        sigma_min=sigma_min,
        epsilon=epsilon,
        tau_cos=tau_cos,
        dropout=dropout,
        raeca_enabled=raeca_enabled,
    )


def _gaussian_map_forward(
    inputs: Tensor, params: GaussianMapParams, sigma_min: float
) -> tuple[Tensor, Tensor]:
    p = inputs @ params.freq_w.T + params.freq_b
    rff = torch.cat([torch.cos(p), torch.sin(p)], dim=-1)
    mu = rff @ params.mu_w.T + params.mu_b
    log_var = rff @ params.sigma_w.T + params.sigma_b
    sigma = torch.clamp(torch.exp(0.5 * log_var), min=sigma_min)
    return mu, sigma


def init_node_gaussian(params: StructuralParams) -> GaussianEmbedding:
    """Initial Gaussian embedding for every node from its raw features."""
    x = params.x
    if params.proj_w is not None:
        x = x @ params.proj_w.T + params.proj_b
    mu, sigma = _gaussian_map_forward(x, params.node_map, params.sigma_min)
    return GaussianEmbedding(mu=mu, sigma=sigma)


def edge_gaussian(ratings: Tensor, layer: int, params: StructuralParams) -> EdgeOpinion:
    """Layer-k Gaussian opinion for each raw rating (scaled by 1/10)."""
    scaled = (ratings.to(params.x.dtype) / 10.0).unsqueeze(-1)
    mu, sigma = _gaussian_map_forward(scaled, params.edge_maps[layer - 1], params.sigma_min)
    return EdgeOpinion(mu=mu, sigma=sigma)


def raeca(
    mu_prev: Tensor,
    trustors: Tensor,
    trustees: Tensor,
    tau_cos: float,
    epsilon: float = 1e-8,
) -> DefensiveCoefficients:
    """Defensive coefficients from shifted-cosine and Jaccard similarity.

    Pipeline per receiving node i over in-edges j -> i: shifted cosine in
    [0, 2] and Jaccard on ReLU-clipped means; threshold pruning (tau_cos,
    Jaccard fixed at 0.05); quadratic-mean fusion; normalization over
    retained neighbors scaled by the pruned in-degree; unit self-loop;
    final row normalization over in-neighbors plus self.
    """
    n = mu_prev.shape[0]
    dtype = mu_prev.dtype
    mi = mu_prev[trustees]
    mj = mu_prev[trustors]

    dot = (mi * mj).sum(dim=-1)
    norms = mi.norm(dim=-1) * mj.norm(dim=-1)
    s_cos = 1.0 + dot / (norms + epsilon)

    pi = torch.relu(mi)
    pj = torch.relu(mj)
    s_jac = torch.minimum(pi, pj).sum(dim=-1) / (torch.maximum(pi, pj).sum(dim=-1) + epsilon)

    zero = torch.zeros((), dtype=dtype)
    kept_cos = torch.where(s_cos >= tau_cos, s_cos, zero)
    kept_jac = torch.where(s_jac >= JACCARD_PRUNE_THRESHOLD, s_jac, zero)

    total = kept_cos + kept_jac
    safe_total = torch.where(total > 0, total, torch.ones_like(total))
    fused = torch.where(total > 0, (kept_cos**2 + kept_jac**2) / safe_total, zero)

    denom = torch.zeros(n, dtype=dtype).index_add(0, trustees, fused) + epsilon
    survives = (fused > 0).to(dtype)
    pruned_degree = torch.zeros(n, dtype=dtype).index_add(0, trustees, survives)
    r_hat = fused / denom[trustees] * pruned_degree[trustees]

    row_sum = torch.zeros(n, dtype=dtype).index_add(0, trustees, r_hat) + SELF_LOOP_WEIGHT
    edge_alpha = r_hat / (row_sum[trustees] + epsilon)
    self_alpha = SELF_LOOP_WEIGHT / (row_sum + epsilon)
    return DefensiveCoefficients(edge_alpha, self_alpha, pruned_degree)


def uniform_coefficients(
    num_nodes: int, trustors: Tensor, trustees: Tensor, dtype: torch.dtype
) -> DefensiveCoefficients:
    """Mean-aggregation fallback: uniform weight over in-neighbors plus self."""
    ones = torch.ones(trustees.shape[0], dtype=dtype)
    in_degree = torch.zeros(num_nodes, dtype=dtype).index_add(0, trustees, ones)
    share = 1.0 / (in_degree + 1.0)
    return DefensiveCoefficients(share[trustees], share, in_degree)


def aggregate(
    embeddings: GaussianEmbedding,
    opinions: EdgeOpinion,
    coeffs: DefensiveCoefficients,
    trustors: Tensor,
    trustees: Tensor,
    *,
    dropout: float = 0.0,
    training: bool = False,
    generator: torch.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Dual-role weighted message sums, concatenated [in | out | op_in | op_out].

    Means are weighted by alpha, standard deviations by |alpha| so that
    uncertainty never cancels.  The trustee side includes the self-loop
    share; the trustor side reuses the same coefficients viewed from the
    sender and runs over real out-edges only.
    """
    mu, sigma = embeddings.mu, embeddings.sigma
    n, _ = mu.shape
    d_ell = opinions.mu.shape[1] if opinions.mu.ndim == 2 else 0
    dtype = mu.dtype

    w = coeffs.edge_alpha.unsqueeze(-1)
    aw = coeffs.edge_alpha.abs().unsqueeze(-1)
    self_w = coeffs.self_alpha.unsqueeze(-1)

    def scatter(index: Tensor, values: Tensor, width: int) -> Tensor:
        return torch.zeros(n, width, dtype=dtype).index_add(0, index, values)

    mu_in = scatter(trustees, w * mu[trustors], mu.shape[1]) + self_w * mu
    sigma_in = scatter(trustees, aw * sigma[trustors], mu.shape[1]) + self_w.abs() * sigma
    mu_out = scatter(trustors, w * mu[trustees], mu.shape[1])
    sigma_out = scatter(trustors, aw * sigma[trustees], mu.shape[1])

    mu_op_in = scatter(trustees, w * opinions.mu, d_ell)
    sigma_op_in = scatter(trustees, aw * opinions.sigma, d_ell)
    mu_op_out = scatter(trustors, w * opinions.mu, d_ell)
    sigma_op_out = scatter(trustors, aw * opinions.sigma, d_ell)

    mu_concat = torch.cat([mu_in, mu_out, mu_op_in, mu_op_out], dim=-1)
    sigma_concat = torch.cat([sigma_in, sigma_out, sigma_op_in, sigma_op_out], dim=-1)

    if training and dropout > 0.0:
        keep = (
            torch.rand(mu_concat.shape, generator=generator, dtype=dtype) >= dropout
        ).to(dtype)
        mu_concat = mu_concat * keep / (1.0 - dropout)
    return mu_concat, sigma_concat


def conv_update(
    mu_concat: Tensor, sigma_concat: Tensor, layer: int, params: StructuralParams
) -> GaussianEmbedding:
    """Shared linear transform with ReLU mean and gated uncertainty."""
    w = params.conv_w[layer - 1]
    b = params.conv_b[layer - 1]
    expected = 2 * params.d_prime + 2 * params.d_ell
    if mu_concat.shape[-1] != expected:
        raise ValidationError(
            f"concat width {mu_concat.shape[-1]} does not match 2 d' + 2 d_ell = {expected}"
        )
    mu_pre = mu_concat @ w.T + b
    sigma_pre = sigma_concat @ w.abs().T
    gate = (mu_pre > 0).to(mu_pre.dtype)
    return GaussianEmbedding(mu=torch.relu(mu_pre), sigma=sigma_pre * gate)


def structural_forward(
    snapshot: Snapshot,
    params: StructuralParams,
    *,
    training: bool = False,
    generator: torch.Generator | None = None,
) -> GaussianEmbedding:
    """L-hop Gaussian convolution over one snapshot for every global node.

    Nodes without edges in the snapshot follow the self-loop-only path,
    so their output depends only on their own features.
    """
    trustors = torch.from_numpy(snapshot.trustors)
    trustees = torch.from_numpy(snapshot.trustees)
    ratings = torch.from_numpy(snapshot.ratings)

    state = init_node_gaussian(params)
    num_nodes = state.mu.shape[0]
    for layer in range(1, params.layers + 1):
        opinions = edge_gaussian(ratings, layer, params)
        if params.raeca_enabled:
            coeffs = raeca(state.mu, trustors, trustees, params.tau_cos, params.epsilon)
        else:
            coeffs = uniform_coefficients(num_nodes, trustors, trustees, state.mu.dtype)
        mu_concat, sigma_concat = aggregate(
            state,
            opinions,
            coeffs,
            trustors,
            trustees,
            dropout=params.dropout,
            training=training,
            generator=generator,
        )
        state = conv_update(mu_concat, sigma_concat, layer, params)
    return state
