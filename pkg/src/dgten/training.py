"""Edge prediction head objective, optimizer loop, and the expanding-window protocol.

Task 1 predicts the next snapshot's edges among observed nodes, Task 2 a
multi-slot horizon, Task 3 only edges incident to cold-start nodes that
first appear in the final training snapshot.  Every round trains a fresh
model on slots 1..t_end and scores the future edges from the last
trained slot's embeddings.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, TrainingError
from .graphs import SnapshotSequence
from .metrics import (
    ConfusionCounts,
    auc,
    average_precision,
    balanced_accuracy,
    f1_macro,
    f1_micro,
    mcc,
)
from .model import TrustModel
from .numerics import ParamRegistry, Tensor, derive_seed
from .optim import Madgrad

logger = logging.getLogger("dgten")

METRIC_NAMES = ("mcc", "auc", "ba", "ap", "f1_micro", "f1_macro")


@dataclass
class TrainConfig:
    """Hyperparameters for one training/evaluation run."""

    learning_rate: float = 0.005
    weight_decay: float = 1e-5
    epochs: int = 250
    layers: int = 3
    tau_cos: float = 1.3
    heads: int = 20
    dropout: float = 0.3
    cheb_order: int = 3
    d_prime: int = 32
    d_head: int = 8
    ode_steps: int = 4
    delta: int = 3
    t_initial: int = 2
    sigma_min: float = 1e-4
    epsilon: float = 1e-8
    seed: int = 0
    raeca: bool = True
    dtype: str = "float64"

    def validate(self) -> None:
        positive = [
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
            ("epochs", self.epochs),
            ("layers", self.layers),
            ("tau_cos", self.tau_cos),
            ("heads", self.heads),
            ("d_prime", self.d_prime),
            ("d_head", self.d_head),
            ("ode_steps", self.ode_steps),
            ("delta", self.delta),
            ("sigma_min", self.sigma_min),
            ("epsilon", self.epsilon),
        ]
        for name, value in positive:
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.cheb_order < 0:
            raise ConfigError("cheb_order must be >= 0")
        if self.dropout < 0 or self.dropout >= 1:
            raise ConfigError("dropout must be in [0, 1)")
        if self.t_initial < 2:
            raise ConfigError("t_initial must be >= 2 for dynamic modeling")


@dataclass(frozen=True)
class EdgeInstance:
    """One labeled directed edge at a slot, with its imbalance weight."""

    trustor: int
    trustee: int
    label: int  # 1 = Distrust, 0 = Trust
    slot: int   # 0-based snapshot index
    weight: float = 1.0


@dataclass
class TrainResult:
    model: TrustModel
    losses: list[float]


@dataclass
class EvalReport:
    """Per-round metric rows plus their mean and SD aggregate."""

    task: int
    config: dict
    rounds: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    skipped: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "config": self.config,
            "rounds": self.rounds,
            "aggregate": self.aggregate,
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @staticmethod
    def from_dict(payload: dict) -> "EvalReport":
        return EvalReport(
            task=payload["task"],
            config=payload["config"],
            rounds=payload["rounds"],
            aggregate=payload["aggregate"],
            skipped=payload.get("skipped", []),
        )

    @staticmethod
    def load(path: str | Path) -> "EvalReport":
        return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def class_weights(instances: list[EdgeInstance]) -> np.ndarray:
    """Inverse-frequency weights: w = |D| / (2 * count(class of instance)).

    If only one class is present, every weight falls back to 1.
    """
    labels = np.array([inst.label for inst in instances], dtype=np.int64)
    total = labels.size
    pos = int(labels.sum())
    neg = total - pos
    if pos == 0 or neg == 0:
        if total:
            logger.warning("single-class training batch; class weights fall back to 1")
        return np.ones(total, dtype=np.float64)
    w = np.where(labels == 1, total / (2.0 * pos), total / (2.0 * neg))
    return w.astype(np.float64)


def weighted_bce_loss(
    logits: Tensor,
    labels: Tensor,
    weights: Tensor,
    params: ParamRegistry,
    weight_decay: float,
) -> Tensor:
    """Sum of weighted binary cross-entropy terms plus L2 regularization.

    Uses the stabilized softplus form: -log sigmoid(y) = softplus(-y).
    """
    if logits.numel():
        terms = weights * (
            labels * torch.nn.functional.softplus(-logits)
            + (1.0 - labels) * torch.nn.functional.softplus(logits)
        )
        data_term = terms.sum()
    else:
        data_term = torch.zeros((), dtype=params.dtype)
    return data_term + weight_decay * params.l2_penalty()


def loss(batch: list[EdgeInstance], logits: Tensor, params: ParamRegistry, weight_decay: float) -> Tensor:
    """Objective for a batch of instances whose logits are already computed."""
    labels = torch.tensor([b.label for b in batch], dtype=params.dtype)
    weights = torch.tensor([b.weight for b in batch], dtype=params.dtype)
    return weighted_bce_loss(logits, labels, weights, params, weight_decay)


def window_instances(sequence: SnapshotSequence, t_end: int) -> list[EdgeInstance]:
    """All labeled edges in training slots 1..t_end (0-based 0..t_end-1), weighted."""
    raw: list[EdgeInstance] = []
    for slot in range(t_end):
        snap = sequence.snapshots[slot]
        labels = snap.labels
        for i in range(snap.num_edges):
            raw.append(
                EdgeInstance(
                    int(snap.trustors[i]), int(snap.trustees[i]), int(labels[i]), slot
                )
            )
    weights = class_weights(raw)
    return [
        EdgeInstance(r.trustor, r.trustee, r.label, r.slot, float(w))
        for r, w in zip(raw, weights)
    ]


def train(
    sequence: SnapshotSequence,
    t_end: int,
    config: TrainConfig,
    seed: int | None = None,
) -> TrainResult:
    """Full-batch training on snapshots 1..t_end; deterministic given the seed."""
    config.validate()
    if t_end < config.t_initial:
        raise ConfigError(f"t_end {t_end} is below t_initial {config.t_initial}")
    if t_end > sequence.num_snapshots:
        raise ConfigError(f"t_end {t_end} exceeds {sequence.num_snapshots} snapshots")
    seed = config.seed if seed is None else seed

    window = sequence.snapshots[:t_end]
    instances = window_instances(sequence, t_end)
    model = TrustModel(sequence.global_node_count, t_end, config, seed)
    dtype = model.registry.dtype
    trustors = np.array([i.trustor for i in instances], dtype=np.int64)
    trustees = np.array([i.trustee for i in instances], dtype=np.int64)
    slots = np.array([i.slot for i in instances], dtype=np.int64)
    labels = torch.tensor([i.label for i in instances], dtype=dtype)
    weights = torch.tensor([i.weight for i in instances], dtype=dtype)

    optimizer = Madgrad(model.registry, lr=config.learning_rate)
    losses: list[float] = []
    for epoch in range(config.epochs):
        model.registry.zero_grad()
        result = model.forward(window, training=True)
        logits = model.edge_logits(result.z, trustors, trustees, slots)
        objective = weighted_bce_loss(
            logits, labels, weights, model.registry, config.weight_decay
        )
        value = float(objective)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value}", epoch=epoch)
        objective.backward()
        optimizer.step()
        losses.append(value)
    return TrainResult(model=model, losses=losses)


def round_t_ends(task: int, num_snapshots: int, t_initial: int, delta: int) -> list[int]:
    """Protocol round endpoints: the last trained slot index (1-based) per round."""
    if task in (1, 3):
        if num_snapshots < t_initial + 1:
            raise ConfigError("tasks 1 and 3 need at least t_initial + 1 snapshots")
        return list(range(t_initial, num_snapshots))
    if task == 2:
        if num_snapshots < t_initial + delta:
            raise ConfigError("task 2 needs at least t_initial + delta snapshots")
        return list(range(t_initial, num_snapshots - delta + 1))
    raise ConfigError(f"unknown task {task}")


def test_edges_for_round(
    sequence: SnapshotSequence, task: int, t_end: int, delta: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(trustors, trustees, labels) of the round's test edges.

    Tasks 1 and 2 keep edges whose endpoints are both observed in the
    training window; Task 3 keeps edges of the next snapshot incident to
    nodes whose first appearance is the final training snapshot.
    """
    if task in (1, 2):
        observed = np.zeros(sequence.global_node_count, dtype=bool)
        observed[sequence.active_nodes(0, t_end - 1)] = True
        last_slot = t_end if task == 1 else t_end + delta - 1
        srcs, dsts, labels = [], [], []
        for slot in range(t_end, last_slot + 1):
            snap = sequence.snapshots[slot]
            keep = observed[snap.trustors] & observed[snap.trustees]
            srcs.append(snap.trustors[keep])
            dsts.append(snap.trustees[keep])
            labels.append(snap.labels[keep])
        return np.concatenate(srcs), np.concatenate(dsts), np.concatenate(labels)
    if task == 3:
        first = sequence.first_appearance()
        cold = first == (t_end - 1)
        snap = sequence.snapshots[t_end]
        keep = cold[snap.trustors] | cold[snap.trustees]
        return snap.trustors[keep], snap.trustees[keep], snap.labels[keep]
    raise ConfigError(f"unknown task {task}")


def _score_round(scores: np.ndarray, labels: np.ndarray) -> dict:
    predicted = (scores >= 0.5).astype(np.int64)
    counts = ConfusionCounts.from_predictions(labels, predicted)
    return {
        "mcc": mcc(counts),
        "auc": auc(scores, labels),
        "ba": balanced_accuracy(counts),
        "ap": average_precision(scores, labels),
        "f1_micro": f1_micro(counts),
        "f1_macro": f1_macro(counts),
    }


def _run_round(
    sequence: SnapshotSequence,
    task: int,
    config: TrainConfig,
    seed: int,
    t_end: int,
    frozen: TrustModel | None = None,
) -> tuple[dict | None, str | None]:
    trustors, trustees, labels = test_edges_for_round(sequence, task, t_end, config.delta)
    if labels.size == 0 or labels.min() == labels.max():
        return None, "single-class or empty test round"

    if frozen is None:
        round_seed = derive_seed(seed, "round", t_end)
        result = train(sequence, t_end, config, seed=round_seed)
        model = result.model
        horizon = t_end
    else:
        model = frozen
        horizon = frozen.horizon
    with torch.no_grad():
        forward = model.forward(sequence.snapshots[:horizon], training=False)
        slots = np.full(trustors.shape[0], horizon - 1, dtype=np.int64)
        logits = model.edge_logits(forward.z, trustors, trustees, slots)
        scores = torch.sigmoid(logits).numpy()

    row: dict = {"seed": seed, "t_end": t_end, "n_test": int(labels.size)}
    row.update(_score_round(scores, labels.astype(np.int64)))
    return row, None


def evaluate(
    sequence: SnapshotSequence,
    task: int,
    config: TrainConfig,
    seeds: tuple[int, ...] | None = None,
    max_workers: int = 1,
    frozen: TrustModel | None = None,
) -> EvalReport:
    """Expanding-window protocol for one task, aggregated over rounds and seeds.

    With ``frozen`` set, no per-round training happens; the given model
    scores every round's test set from its own trained horizon.
    """
    config.validate()
    seeds = (config.seed,) if seeds is None else tuple(seeds)
    t_ends = round_t_ends(task, sequence.num_snapshots, config.t_initial, config.delta)
    jobs = [(seed, t_end) for seed in seeds for t_end in t_ends]

    def run(job):
        seed, t_end = job
        return job, _run_round(sequence, task, config, seed, t_end, frozen=frozen)

    if max_workers > 1 and frozen is None:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]

    report = EvalReport(task=task, config=asdict(config))
    for (seed, t_end), (row, skip_reason) in outcomes:
        if row is None:
            logger.warning("skipping round t_end=%d seed=%d: %s", t_end, seed, skip_reason)
            report.skipped.append({"seed": seed, "t_end": t_end, "reason": skip_reason})
        else:
            report.rounds.append(row)

    for name in METRIC_NAMES:
        values = np.array([row[name] for row in report.rounds], dtype=np.float64)
        if values.size == 0:
            report.aggregate[name] = {"mean": None, "sd": None}
        else:
            sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
            report.aggregate[name] = {"mean": float(values.mean()), "sd": sd}
    return report
