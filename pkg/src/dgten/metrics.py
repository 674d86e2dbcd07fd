"""Binary classification metrics with Distrust as the positive class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @staticmethod
    def from_predictions(labels: np.ndarray, predicted: np.ndarray) -> "ConfusionCounts":
        labels = np.asarray(labels).astype(np.int64)
        predicted = np.asarray(predicted).astype(np.int64)
        return ConfusionCounts(
            tp=int(np.sum((predicted == 1) & (labels == 1))),
            tn=int(np.sum((predicted == 0) & (labels == 0))),
            fp=int(np.sum((predicted == 1) & (labels == 0))),
            fn=int(np.sum((predicted == 0) & (labels == 1))),
        )

    def swapped(self) -> "ConfusionCounts":
        """Counts with the class roles exchanged."""
        return ConfusionCounts(tp=self.tn, tn=self.tp, fp=self.fn, fn=self.fp)


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation coefficient; 0 when any marginal factor is zero."""
    factors = [c.tp + c.fp, c.tp + c.fn, c.tn + c.fp, c.tn + c.fn]
    if any(f == 0 for f in factors):
        return 0.0
    num = c.tp * c.tn - c.fp * c.fn
    den = float(factors[0]) * factors[1] * factors[2] * factors[3]
    return num / den**0.5


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks in ascending score order; tied scores share the mean rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    return ranks


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based AUC; equals the pairwise (wins + half ties) statistic."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = _average_ranks(scores)
    return (float(ranks[labels == 1].sum()) - pos * (pos + 1) / 2.0) / (pos * neg)


def balanced_accuracy(c: ConfusionCounts) -> float:
    """Mean of sensitivity and specificity; an empty class contributes 0."""
    import logging

    terms = []
    for num, den in ((c.tp, c.tp + c.fn), (c.tn, c.tn + c.fp)):
        if den == 0:
            logging.getLogger("dgten").warning("balanced accuracy: empty class treated as 0")
            terms.append(0.0)
        else:
            terms.append(num / den)
    return 0.5 * (terms[0] + terms[1])


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Threshold-sweep AP = sum over groups of (R_k - R_{k-1}) * P_k.

    Descending-score thresholds; tied scores form one threshold group.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    total_pos = int(labels.sum())
    if total_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    ap = 0.0
    seen = 0
    tp = 0
    prev_recall = 0.0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp += int(sorted_labels[i : j + 1].sum())
        seen += j - i + 1
        precision = tp / seen
        recall = tp / total_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return ap


def _f1(tp: int, fp: int, fn: int) -> float:
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def f1_micro(c: ConfusionCounts) -> float:
    """F1 from global positive-class precision and recall."""
    return _f1(c.tp, c.fp, c.fn)


def f1_macro(c: ConfusionCounts) -> float:
    """Unweighted mean of the per-class F1 scores."""
    swapped = c.swapped()
    return 0.5 * (_f1(c.tp, c.fp, c.fn) + _f1(swapped.tp, swapped.fp, swapped.fn))
