"""Static and dynamic analyses of per-node structural uncertainty.

The structural layer's sigma output is kept per snapshot as an
(N, T, d') stack; this module turns it into fingerprint tables,
threshold watchlists, and k-means cluster assignments.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass
class FingerprintTable:
    """One row per (node, snapshot) appearance: sigma vector, mean, feature ranks."""

    node_ids: np.ndarray      # (R,)
    snapshots: np.ndarray     # (R,)
    sigma: np.ndarray         # (R, d')
    mean_sigma: np.ndarray    # (R,)
    feature_ranks: np.ndarray  # (R, d'), 0 = most uncertain feature in the row

    @property
    def num_rows(self) -> int:
        return int(self.node_ids.shape[0])

    def top_nodes(self, k: int, snapshot: int | None = None) -> list[int]:
        """Top-k node ids by mean sigma, ties broken by ascending node id.

        With ``snapshot`` given, ranks that snapshot's rows; otherwise
        ranks nodes by the mean over all their appearances.
        """
        if snapshot is not None:
            mask = self.snapshots == snapshot
            nodes = self.node_ids[mask]
            means = self.mean_sigma[mask]
        else:
            nodes_unique = np.unique(self.node_ids)
            means = np.array(
                [self.mean_sigma[self.node_ids == n].mean() for n in nodes_unique]
            )
            nodes = nodes_unique
        order = np.lexsort((nodes, -means))
        return [int(n) for n in nodes[order][:k]]

    def to_csv(self, path: str | Path) -> None:
        d = self.sigma.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["node_id", "snapshot", "mean_sigma"] + [f"sigma_{j}" for j in range(d)]
            )
            for i in range(self.num_rows):
                writer.writerow(
                    [int(self.node_ids[i]), int(self.snapshots[i]), repr(float(self.mean_sigma[i]))]
                    + [repr(float(v)) for v in self.sigma[i]]
                )

    @staticmethod
    def from_csv(path: str | Path) -> "FingerprintTable":
        with open(path, "r", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            d = len(header) - 3
            nodes, snaps, means, sigmas = [], [], [], []
            for row in reader:
                nodes.append(int(row[0]))
                snaps.append(int(row[1]))
                means.append(float(row[2]))
                sigmas.append([float(v) for v in row[3 : 3 + d]])
        sigma = np.array(sigmas, dtype=np.float64).reshape(len(nodes), d)
        return FingerprintTable(
            node_ids=np.array(nodes, dtype=np.int64),
            snapshots=np.array(snaps, dtype=np.int64),
            sigma=sigma,
            mean_sigma=np.array(means, dtype=np.float64),
            feature_ranks=_rank_rows(sigma),
        )


def _rank_rows(sigma: np.ndarray) -> np.ndarray:
    """Per-row descending rank of each feature (0 = largest sigma)."""
    order = np.argsort(-sigma, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(sigma.shape[0])[:, None]
    ranks[rows, order] = np.arange(sigma.shape[1])[None, :]
    return ranks


def fingerprints(
    sigma_stack: np.ndarray, active_mask: np.ndarray | None = None
) -> FingerprintTable:
    """Fingerprint rows from an (N, T, d') sigma stack.

    ``active_mask`` (N, T) restricts rows to actual node appearances;
    without it every (node, snapshot) cell becomes a row.
    """
    n, t, d = sigma_stack.shape
    if active_mask is None:
        active_mask = np.ones((n, t), dtype=bool)
    nodes, slots = np.nonzero(active_mask)
    sigma = sigma_stack[nodes, slots]
    return FingerprintTable(
        node_ids=nodes.astype(np.int64),
        snapshots=slots.astype(np.int64),
        sigma=sigma,
        mean_sigma=sigma.mean(axis=1),
        feature_ranks=_rank_rows(sigma),
    )


def watchlist(
    sigma_stack: np.ndarray,
    threshold: float,
    active_mask: np.ndarray | None = None,
) -> dict[int, list[int]]:
    """Per-snapshot sets of nodes whose mean sigma strictly exceeds the threshold."""
    n, t, _ = sigma_stack.shape
    if active_mask is None:
        active_mask = np.ones((n, t), dtype=bool)
    means = sigma_stack.mean(axis=2)
    result: dict[int, list[int]] = {}
    for slot in range(t):
        flagged = np.flatnonzero(active_mask[:, slot] & (means[:, slot] > threshold))
        result[slot] = [int(v) for v in flagged]
    return result


def watchlist_total(listing: dict[int, list[int]]) -> int:
    """Flagged appearances summed over every snapshot (nodes may recur)."""
    return sum(len(v) for v in listing.values())


def cluster_fingerprints(
    vectors: np.ndarray, k: int, seed: int = 0, iterations: int = 100
) -> np.ndarray:
    """k-means over fingerprint vectors: k-means++ init, Euclidean, fixed seed."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if k < 1:
        raise ConfigError("cluster count must be >= 1")
    if k > n:
        raise ConfigError(f"cluster count {k} exceeds population {n}")

    rng = np.random.default_rng(seed)
    centers = np.empty((k, vectors.shape[1]), dtype=np.float64)
    centers[0] = vectors[rng.integers(n)]
    closest = np.sum((vectors - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total == 0.0:
            centers[j] = vectors[rng.integers(n)]
        else:
            centers[j] = vectors[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, np.sum((vectors - centers[j]) ** 2, axis=1))

    assignments = np.full(n, -1, dtype=np.int64)
    for _ in range(iterations):
        distances = ((vectors[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignments = distances.argmin(axis=1)
        for j in range(k):
            members = vectors[new_assignments == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)
        if np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments
    return assignments
