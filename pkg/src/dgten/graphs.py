"""Signed interaction ingestion and time-driven snapshot discretization.

A raw edge list of timestamped signed ratings is loaded into
:class:`InteractionRecord` rows, then cut into ``N`` equal-duration
snapshots.  Each snapshot is a static directed labeled graph; within a
slot the latest rating for a (trustor, trustee) pair wins.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, UndefinedMetricError, ValidationError

RATING_MIN = -10
RATING_MAX = 10

SEQUENCE_FORMAT_VERSION = 1


class TrustLabel(IntEnum):
    TRUST = 0
    DISTRUST = 1

    @staticmethod
    def from_rating(rating: int) -> "TrustLabel":
        return TrustLabel.DISTRUST if rating < 0 else TrustLabel.TRUST


class NodeClass(IntEnum):
    GOOD = 0
    BAD = 1


@dataclass(frozen=True)
class InteractionRecord:
    """One timestamped signed rating from trustor to trustee."""

    trustor: int
    trustee: int
    rating: int
    timestamp: float

    @property
    def label(self) -> TrustLabel:
        return TrustLabel.from_rating(self.rating)


@dataclass
class Snapshot:
    """Directed labeled graph for one time slot (parallel edge arrays)."""

    trustors: np.ndarray  # int64 (E,)
    trustees: np.ndarray  # int64 (E,)
    ratings: np.ndarray   # int64 (E,), nonzero in [-10, 10]

    @property
    def num_edges(self) -> int:
        return int(self.trustors.shape[0])

    @property
    def labels(self) -> np.ndarray:
        """1 where the edge is Distrust, 0 where Trust."""
        return (self.ratings < 0).astype(np.int64)

    def active_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate([self.trustors, self.trustees]))

    def copy(self) -> "Snapshot":
        return Snapshot(self.trustors.copy(), self.trustees.copy(), self.ratings.copy())


@dataclass
class SnapshotSequence:
    """Ordered snapshots plus the global node index they live in.

    Slot ``k`` (0-based) covers ``(t_min + k*slot_duration,
    t_min + (k+1)*slot_duration]`` with the first slot closed on the left.
    """

    num_snapshots: int
    slot_duration: float
    t_min: float
    global_node_count: int
    snapshots: list[Snapshot] = field(default_factory=list)

    def __post_init__(self):
        if len(self.snapshots) != self.num_snapshots:
            raise ValidationError(
                f"expected {self.num_snapshots} snapshots, got {len(self.snapshots)}"
            )

    def copy(self) -> "SnapshotSequence":
        return SnapshotSequence(
            self.num_snapshots,
            self.slot_duration,
            self.t_min,
            self.global_node_count,
            [s.copy() for s in self.snapshots],
        )

    def total_edges(self) -> int:
        return sum(s.num_edges for s in self.snapshots)

    def active_nodes(self, first_slot: int = 0, last_slot: int | None = None) -> np.ndarray:
        """Nodes with at least one incident edge in slots [first_slot, last_slot]."""
        last = self.num_snapshots - 1 if last_slot is None else last_slot
        parts = [s.active_nodes() for s in self.snapshots[first_slot : last + 1]]
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(parts))

    def first_appearance(self) -> np.ndarray:
        """First slot each node is active in, or -1 if it never appears."""
        first = np.full(self.global_node_count, -1, dtype=np.int64)
        for k, snap in enumerate(self.snapshots):
            nodes = snap.active_nodes()
            fresh = nodes[first[nodes] < 0]
            first[fresh] = k
        return first


def _open_text(path: str | Path):
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def load_edge_list(path: str | Path, has_header: bool = False) -> list[InteractionRecord]:
    """Load a ``SOURCE,TARGET,RATING,TIME`` CSV into interaction records.

    Node ids are remapped to dense 0-based indices in order of first
    appearance.  Self-edges are dropped, exact duplicate
    (source, target, time) rows are deduplicated keeping the later row,
    and zero or out-of-range ratings are rejected.
    """
    raws: list[tuple[int, int, int, float]] = []
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and has_header:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=lineno)
            try:
                src = int(row[0])
                dst = int(row[1])
                rating = int(float(row[2]))
                ts = float(row[3])
            except ValueError as exc:
                raise ParseError(f"unparseable field ({exc})", line=lineno) from exc
            if float(row[2]) != rating:
                raise ParseError(f"rating {row[2]} is not integral", line=lineno)
            if rating == 0 or rating < RATING_MIN or rating > RATING_MAX:
                raise ValidationError(
                    f"line {lineno}: rating {rating} outside nonzero [{RATING_MIN}, {RATING_MAX}]"
                )
            if src == dst:
                continue  # trust is a relation between distinct entities
            raws.append((src, dst, rating, ts))

    # Dedup exact (source, target, time) keys; the later row wins.
    last_index: dict[tuple[int, int, float], int] = {}
    for i, (src, dst, _r, ts) in enumerate(raws):
        last_index[(src, dst, ts)] = i
    kept = [r for i, r in enumerate(raws) if last_index[(r[0], r[1], r[3])] == i]

    remap: dict[int, int] = {}
    records: list[InteractionRecord] = []
    for src, dst, rating, ts in kept:
        if src not in remap:
            remap[src] = len(remap)
        if dst not in remap:
            remap[dst] = len(remap)
        records.append(InteractionRecord(remap[src], remap[dst], rating, ts))
    return records


def num_nodes(records: list[InteractionRecord]) -> int:
    if not records:
        return 0
    return 1 + max(max(r.trustor, r.trustee) for r in records)


def discretize(records: list[InteractionRecord], n_snapshots: int) -> SnapshotSequence:
    """Cut records into ``n_snapshots`` equal-duration snapshots.

    Within a slot the latest rating per (trustor, trustee) pair wins;
    timestamp ties are broken in favor of the later input row.
    """
    if n_snapshots < 2:
        raise ConfigError("dynamic modeling needs at least 2 snapshots")
    if not records:
        raise ValidationError("cannot discretize an empty record list")

    t_min = min(r.timestamp for r in records)
    t_max = max(r.timestamp for r in records)
    total = t_max - t_min
    slot_duration = total / n_snapshots

    # slot index: first slot closed on the left, all slots closed on the right
    def slot_of(ts: float) -> int:
        if total == 0.0:
            return 0
        x = (ts - t_min) * n_snapshots / total
        k = math.ceil(x)
        return min(max(k, 1), n_snapshots) - 1

    kept: list[dict[tuple[int, int], InteractionRecord]] = [dict() for _ in range(n_snapshots)]
    for rec in records:
        k = slot_of(rec.timestamp)
        key = (rec.trustor, rec.trustee)
        prev = kept[k].get(key)
        if prev is None or rec.timestamp >= prev.timestamp:
            kept[k][key] = rec

    snapshots = []
    for slot in kept:
        recs = list(slot.values())
        snapshots.append(
            Snapshot(
                trustors=np.array([r.trustor for r in recs], dtype=np.int64),
                trustees=np.array([r.trustee for r in recs], dtype=np.int64),
                ratings=np.array([r.rating for r in recs], dtype=np.int64),
            )
        )
    return SnapshotSequence(
        num_snapshots=n_snapshots,
        slot_duration=slot_duration,
        t_min=t_min,
        global_node_count=num_nodes(records),
        snapshots=snapshots,
    )


def node_classes(
    sequence: SnapshotSequence, first_slot: int = 0, last_slot: int | None = None
) -> np.ndarray:
    """Per-node Good/Bad classes over the aggregated slot range.

    Bad means strictly more incoming Distrust than incoming Trust edges;
    ties and isolated nodes are Good.  Counts are over every per-slot
    edge (a pair recurring in several slots counts once per slot).
    """
    n = sequence.global_node_count
    distrust_in = np.zeros(n, dtype=np.int64)
    trust_in = np.zeros(n, dtype=np.int64)
    last = sequence.num_snapshots - 1 if last_slot is None else last_slot
    for snap in sequence.snapshots[first_slot : last + 1]:
        labels = snap.labels
        np.add.at(distrust_in, snap.trustees[labels == 1], 1)
        np.add.at(trust_in, snap.trustees[labels == 0], 1)
    classes = np.full(n, NodeClass.GOOD, dtype=np.int64)
    classes[distrust_in > trust_in] = NodeClass.BAD
    return classes


def edge_homophily(sequence: SnapshotSequence, labeling: np.ndarray | None = None) -> float:
    """Fraction of directed edges whose endpoints share a node class.

    ``labeling`` maps node id to an integer class; the default applies
    :func:`node_classes` to the full sequence.
    """
    if labeling is None:
        labeling = node_classes(sequence)
    same = 0
    total = 0
    for snap in sequence.snapshots:
        total += snap.num_edges
        same += int(np.sum(labeling[snap.trustors] == labeling[snap.trustees]))
    if total == 0:
        raise UndefinedMetricError("edge homophily is undefined on an empty edge set")
    return same / total


def save_sequence(sequence: SnapshotSequence, path: str | Path) -> None:
    """Write a sequence as versioned JSON (round-trip exact)."""
    payload = {
        "format": "dgten-snapshot-sequence",
        "version": SEQUENCE_FORMAT_VERSION,
        "num_snapshots": sequence.num_snapshots,
        "slot_duration": sequence.slot_duration,
        "t_min": sequence.t_min,
        "global_node_count": sequence.global_node_count,
        "snapshots": [
            {
                "edges": [
                    [int(s), int(t), int(r)]
                    for s, t, r in zip(snap.trustors, snap.trustees, snap.ratings)
                ]
            }
            for snap in sequence.snapshots
        ],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_sequence(path: str | Path) -> SnapshotSequence:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "dgten-snapshot-sequence":
        raise ParseError(f"{path} is not a snapshot sequence file")
    if payload.get("version") != SEQUENCE_FORMAT_VERSION:
        raise ParseError(f"unsupported sequence format version {payload.get('version')}")
    snapshots = []
    for entry in payload["snapshots"]:
        edges = entry["edges"]
        arr = np.array(edges, dtype=np.int64).reshape(len(edges), 3)
        snapshots.append(Snapshot(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy()))
    return SnapshotSequence(
        num_snapshots=payload["num_snapshots"],
        slot_duration=payload["slot_duration"],
        t_min=payload["t_min"],
        global_node_count=payload["global_node_count"],
        snapshots=snapshots,
    )
