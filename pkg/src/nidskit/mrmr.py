"""Greedy mRMR feature ranking with plugin histogram mutual information.

Columns are quantile-discretized (16 bins by default; columns with fewer
distinct values keep them as-is), which makes the MI estimate invariant
under strictly monotone transforms of a feature. The ranking uses the
difference criterion: at each step pick

    argmax_f  MI(f; y) - mean_{s in selected} MI(f; s)

so the optimal n-feature subset is always the first n entries of a longer
ranking. The quotient criterion is available as an option.
"""

import json
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .dataset import DatasetTable
from .errors import KOutOfRange

DEFAULT_BINS = 16


def discretize(x: np.ndarray, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Integer codes for a column: identity on <=bins distinct values,
    quantile bins otherwise."""
    x = np.asarray(x, dtype=np.float64)
    distinct = np.unique(x)
    if distinct.size <= bins:
        return np.searchsorted(distinct, x).astype(np.int64)
    qs = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
    edges = np.unique(qs)
    return np.searchsorted(edges, x, side="right").astype(np.int64)


def _codes(y) -> np.ndarray:
    _, inv = np.unique(np.asarray(y), return_inverse=True)
    return inv.astype(np.int64)


def mi_discrete(a: np.ndarray, b: np.ndarray) -> float:
    """Plugin mutual information of two integer-coded columns, in bits."""
    n = a.size
    ka = int(a.max()) + 1 if n else 1
    kb = int(b.max()) + 1 if n else 1
    joint = np.zeros((ka, kb), dtype=np.float64)
    np.add.at(joint, (a, b), 1.0)
    joint /= n
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    nz = joint > 0
    ratio = joint[nz] / (np.outer(pa, pb)[nz])
    return float(np.sum(joint[nz] * np.log2(ratio)))


def mutual_information(x, y, bins: int = DEFAULT_BINS) -> float:
    """MI between a numeric column and labels after quantile binning."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("mutual information needs at least 2 samples")
    return mi_discrete(discretize(x, bins), _codes(y))


@dataclass
class FeatureRanking:
    names: List[str]
    relevance: List[float]  # MI(f; y) of each picked feature
    redundancy: List[float]  # mean MI to the already-picked set at pick time
    bins: int
    criterion: str = "difference"
    scores: List[float] = field(default_factory=list)  # objective at pick time

    def __len__(self):
        return len(self.names)

    def to_json(self) -> str:
        return json.dumps(
            {
                "names": self.names,
                "relevance": self.relevance,
                "redundancy": self.redundancy,
                "scores": self.scores,
                "bins": self.bins,
                "criterion": self.criterion,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "FeatureRanking":
        d = json.loads(text)
        return cls(d["names"], d["relevance"], d["redundancy"], d["bins"],
                   d.get("criterion", "difference"), d.get("scores", []))


def mrmr_rank(table: DatasetTable, k: int, bins: int = DEFAULT_BINS,
              criterion: str = "difference") -> FeatureRanking:
    """Rank the first k features greedily; ties break on lower column index."""
    d = table.d
    if not 1 <= k <= d:
        raise KOutOfRange(f"k={k} outside [1, {d}]")
    if table.labels is None:
        raise ValueError("mrmr_rank needs labels")
    codes = [discretize(table.rows[:, j], bins) for j in range(d)]
    y = _codes(table.labels)
    relevance = np.array([mi_discrete(c, y) for c in codes])

    selected: List[int] = []
    red_sum = np.zeros(d)
    ranking = FeatureRanking([], [], [], bins, criterion)
    remaining = np.ones(d, dtype=bool)
    for _ in range(k):
        if selected:
            red = red_sum / len(selected)
            if criterion == "quotient":
                objective = relevance / np.maximum(red, 1e-12)
            else:
                objective = relevance - red
        else:
            red = np.zeros(d)
            objective = relevance.copy()
        objective = np.where(remaining, objective, -np.inf)
        pick = int(np.argmax(objective))  # argmax returns the first maximum
        remaining[pick] = False
        selected.append(pick)
        ranking.names.append(table.schema.model_names[pick])
        ranking.relevance.append(float(relevance[pick]))
        ranking.redundancy.append(float(red[pick]))
        ranking.scores.append(float(objective[pick]))
        for j in range(d):
            if remaining[j]:
                red_sum[j] += mi_discrete(codes[j], codes[pick])
    return ranking


def sweep_counts(ranking: FeatureRanking, counts: Sequence[int] = (1, 2, 3, 4, 5, 10, 20)):
    """Nested prefix subsets of the ranking for each requested size."""
    if max(counts) > len(ranking):
        raise KOutOfRange(f"count {max(counts)} exceeds ranking length {len(ranking)}")
    if min(counts) < 1:
        raise KOutOfRange("counts must be >= 1")
    return [ranking.names[:c] for c in counts]
