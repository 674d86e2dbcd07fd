"""Trust-targeted attack simulation: good-mouthing, bad-mouthing, on-off.

Attacks only ever add edges.  Victims are a random fraction of one node
class; per victim, as many attackers as its total degree are picked
farthest-first by shortest-path distance on the undirected aggregated
graph, with unreachable nodes counting as infinitely far.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, ValidationError
from .graphs import NodeClass, SnapshotSequence, node_classes
from .numerics import derive_seed

logger = logging.getLogger("dgten")

GOOD_MOUTH_RATING = 10
BAD_MOUTH_RATING = -10


class AttackKind(Enum):
    GOOD_MOUTHING = "good-mouthing"
    BAD_MOUTHING = "bad-mouthing"
    ON_OFF = "on-off"


@dataclass
class AttackSpec:
    kind: AttackKind
    victim_fraction: float = 0.10
    seed: int = 0
    phase_origin: int = 0
    window_end: int | None = None  # 0-based injection slot; None = second-to-last

    def validate(self) -> None:
        if not (0.0 < self.victim_fraction <= 1.0):
            raise ConfigError("victim_fraction must be in (0, 1]")


@dataclass
class InjectedEdge:
    slot: int
    attacker: int
    victim: int
    rating: int


@dataclass
class AttackResult:
    sequence: SnapshotSequence
    injected: list[InjectedEdge] = field(default_factory=list)

    def provenance(self) -> dict:
        return {
            "injected_edges": [
                {"slot": e.slot, "attacker": e.attacker, "victim": e.victim, "rating": e.rating}
                for e in self.injected
            ]
        }


def _aggregate_window(sequence: SnapshotSequence, last_slot: int):
    """Directed pair set, per-node total degree, and undirected adjacency."""
    pairs: set[tuple[int, int]] = set()
    degree = np.zeros(sequence.global_node_count, dtype=np.int64)
    adjacency: list[list[int]] = [[] for _ in range(sequence.global_node_count)]
    for snap in sequence.snapshots[: last_slot + 1]:
        for s, t in zip(snap.trustors.tolist(), snap.trustees.tolist()):
            degree[s] += 1
            degree[t] += 1
            if (s, t) not in pairs:
                pairs.add((s, t))
            adjacency[s].append(t)
            adjacency[t].append(s)
    return pairs, degree, adjacency


def _bfs_distances(adjacency: list[list[int]], start: int, n: int) -> np.ndarray:
    dist = np.full(n, -1, dtype=np.int64)  # -1 means unreachable
    dist[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _farthest_candidates(dist: np.ndarray, victim: int) -> np.ndarray:
    """Node ids ordered farthest first; unreachable first, ties by ascending id."""
    n = dist.shape[0]
    ids = np.arange(n)
    effective = np.where(dist < 0, np.iinfo(np.int64).max, dist)
    order = np.lexsort((ids, -effective))
    return np.array([i for i in order if i != victim], dtype=np.int64)


def _inject_for_class(
    sequence: SnapshotSequence,
    spec: AttackSpec,
    target_class: NodeClass,
    rating: int,
    injection_slot: int,
    rng: np.random.Generator,
) -> AttackResult:
    spec.validate()
    attacked = sequence.copy()
    classes = node_classes(sequence, 0, injection_slot)
    pool = np.flatnonzero(classes == target_class)
    if pool.size == 0:
        return AttackResult(sequence=attacked)

    count = max(1, int(round(spec.victim_fraction * pool.size)))
    victims = np.sort(rng.choice(pool, size=min(count, pool.size), replace=False))

    pairs, degree, adjacency = _aggregate_window(sequence, injection_slot)
    injected: list[InjectedEdge] = []
    taken: set[tuple[int, int]] = set()
    for victim in victims.tolist():
        wanted = int(degree[victim])
        if wanted == 0:
            continue
        dist = _bfs_distances(adjacency, victim, sequence.global_node_count)
        chosen: list[int] = []
        for candidate in _farthest_candidates(dist, victim).tolist():
            if len(chosen) == wanted:
                break
            if (candidate, victim) in pairs or (candidate, victim) in taken:
                continue
            chosen.append(candidate)
            taken.add((candidate, victim))
        if len(chosen) < wanted:
            logger.warning(
                "victim %d: only %d of %d attackers available", victim, len(chosen), wanted
            )
        for attacker in chosen:
            injected.append(InjectedEdge(injection_slot, attacker, victim, rating))

    snap = attacked.snapshots[injection_slot]
    if injected:
        snap.trustors = np.concatenate(
            [snap.trustors, np.array([e.attacker for e in injected], dtype=np.int64)]
        )
        snap.trustees = np.concatenate(
            [snap.trustees, np.array([e.victim for e in injected], dtype=np.int64)]
        )
        snap.ratings = np.concatenate(
            [snap.ratings, np.array([e.rating for e in injected], dtype=np.int64)]
        )
    return AttackResult(sequence=attacked, injected=injected)


def _resolve_injection_slot(sequence: SnapshotSequence, spec: AttackSpec) -> int:
    slot = sequence.num_snapshots - 2 if spec.window_end is None else spec.window_end
    if not (0 <= slot < sequence.num_snapshots):
        raise ConfigError(f"injection slot {slot} outside 0..{sequence.num_snapshots - 1}")
    return slot


def good_mouthing(sequence: SnapshotSequence, spec: AttackSpec) -> AttackResult:
    """Inject one Trust edge per attacker toward each sampled Bad victim."""
    slot = _resolve_injection_slot(sequence, spec)
    rng = np.random.default_rng(spec.seed)
    return _inject_for_class(sequence, spec, NodeClass.BAD, GOOD_MOUTH_RATING, slot, rng)


def bad_mouthing(sequence: SnapshotSequence, spec: AttackSpec) -> AttackResult:
    """Mirror of good-mouthing: Distrust edges toward sampled Good victims."""
    slot = _resolve_injection_slot(sequence, spec)
    rng = np.random.default_rng(spec.seed)
    return _inject_for_class(sequence, spec, NodeClass.GOOD, BAD_MOUTH_RATING, slot, rng)


def on_off(sequence: SnapshotSequence, spec: AttackSpec) -> AttackResult:
    """Bad-mouthing on alternating slots starting at phase_origin; off slots untouched.

    Each on-slot resamples victims from its own RNG stream and uses the
    history up to and including that slot for classes and degrees.
    """
    if sequence.num_snapshots < 2:
        raise ValidationError("on-off attack needs at least 2 snapshots")
    attacked = sequence
    injected: list[InjectedEdge] = []
    for slot in range(sequence.num_snapshots):
        if slot < spec.phase_origin or (slot - spec.phase_origin) % 2 != 0:
            continue
        rng = np.random.default_rng(derive_seed(spec.seed, "on-off", slot))
        step = _inject_for_class(
            attacked, spec, NodeClass.GOOD, BAD_MOUTH_RATING, slot, rng
        )
        attacked = step.sequence
        injected.extend(step.injected)
    return AttackResult(sequence=attacked.copy() if attacked is sequence else attacked, injected=injected)


def run_attack(sequence: SnapshotSequence, spec: AttackSpec) -> AttackResult:
    if spec.kind is AttackKind.GOOD_MOUTHING:
        return good_mouthing(sequence, spec)
    if spec.kind is AttackKind.BAD_MOUTHING:
        return bad_mouthing(sequence, spec)
    if spec.kind is AttackKind.ON_OFF:
        return on_off(sequence, spec)
    raise ConfigError(f"unknown attack kind {spec.kind}")
