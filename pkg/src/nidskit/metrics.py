"""Binary classification scoring: confusion counts, MCC, F1, AUROC.

Accuracy is deliberately not computed: on traffic data with a dominant
benign class it rewards the constant classifier, so the report carries
MCC / F1 / AUROC only.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingleClassLabels


def confusion(y_true, y_pred):
    """Return (tp, tn, fp, fn) for 0/1 arrays."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    return tp, tn, fp, fn


def mcc(tp: int, tn: int, fp: int, fn: int) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty.

    (TP*TN - FP*FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN)), computed with
    exact integer arithmetic before the final division.
    """
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def f1(tp: int, tn: int, fp: int, fn: int) -> float:
    """F1 = 2TP / (2TP + FP + FN); 0 when the denominator is 0."""
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


def auroc(scores, labels) -> float:
    """Rank-based AUROC with average ranks for ties.

    Equals the probability that a random positive outranks a random
    negative, ties counted 1/2, and the trapezoidal area under the
    empirical ROC curve.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise SingleClassLabels("auroc needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # average rank for the tie group, 1-based
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[labels == 1]))
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    tn: int
    fp: int
    fn: int
    mcc: float
    f1: float
    auroc: float

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "tn": self.tn,
            "fp": self.fp,
            "fn": self.fn,
            "mcc": self.mcc,
            "f1": self.f1,
            "auroc": self.auroc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(d["tp"], d["tn"], d["fp"], d["fn"], d["mcc"], d["f1"], d["auroc"])


def score_predictions(scores, y_true, threshold: float = 0.5) -> MetricsReport:
    """Full report for probability-like scores against 0/1 truth.

    Raises SingleClassLabels if the truth contains only one class (the
    threshold metrics would be fine but AUROC is undefined).
    """
    scores = np.asarray(scores, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = (scores >= threshold).astype(np.int64)
    tp, tn, fp, fn = confusion(y_true, y_pred)
    auc = auroc(scores, y_true)
    return MetricsReport(tp, tn, fp, fn, mcc(tp, tn, fp, fn), f1(tp, tn, fp, fn), auc)
