"""CART-style binary classification tree.

Split finding is vectorized over (position, feature) with prefix class
counts. Zero-gain splits are allowed (a node splits whenever a valid
split exists), which is what lets a depth-2 tree carve XOR exactly even
though no single axis split improves impurity. Determinism: ties resolve
to the lowest feature index, then the lowest threshold.
"""

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .._util import stable_seed


@dataclass(frozen=True)
class TreeParams:
    criterion: str = "gini"  # gini | entropy
    splitter: str = "best"  # best | random
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: Optional[str] = None  # None | sqrt | log2
    max_leaf_nodes: Optional[int] = None

    def to_dict(self):
        return {
            "criterion": self.criterion,
            "splitter": self.splitter,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "max_leaf_nodes": self.max_leaf_nodes,
        }


def n_candidate_features(d: int, max_features: Optional[str]) -> int:
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d))) if d > 1 else 1
    raise ValueError(f"unknown max_features {max_features!r}")


def _impurity(c0, c1, criterion: str):
    """Vectorized gini/entropy from class counts (floats or arrays)."""
    n = c0 + c1
    p0 = np.divide(c0, n, out=np.zeros_like(np.asarray(n, dtype=float)), where=n > 0)
    p1 = np.divide(c1, n, out=np.zeros_like(np.asarray(n, dtype=float)), where=n > 0)
    if criterion == "gini":
        return 1.0 - p0 * p0 - p1 * p1
    log0 = np.where(p0 > 0, np.log2(p0, where=p0 > 0), 0.0)
    log1 = np.where(p1 > 0, np.log2(p1, where=p1 > 0), 0.0)
    return -(p0 * log0 + p1 * log1)


@dataclass
class _Split:
    feature: int
    threshold: float
    gain: float
    left: np.ndarray
    right: np.ndarray


def _pick_features(d: int, params: TreeParams, rng) -> np.ndarray:
    m = n_candidate_features(d, params.max_features)
    if m >= d:
        return np.arange(d)
    return np.sort(rng.choice(d, size=m, replace=False))


def _find_split(X, y, idx, params: TreeParams, rng) -> Optional[_Split]:
    n = idx.size
    cand = _pick_features(X.shape[1], params, rng)
    msl = params.min_samples_leaf
    c1_total = int(y[idx].sum())
    parent = float(_impurity(np.float64(n - c1_total), np.float64(c1_total), params.criterion))

    if params.splitter == "random":
        best = None
        for f in cand:
            xcol = X[idx, f]
            lo, hi = xcol.min(), xcol.max()
            if lo == hi:
                continue
            t = float(rng.uniform(lo, hi))
            left = xcol <= t
            nl = int(left.sum())
            if nl < msl or n - nl < msl or nl == 0 or nl == n:
                continue
            l1 = int(y[idx[left]].sum())
            child = (
                nl * _impurity(np.float64(nl - l1), np.float64(l1), params.criterion)
                + (n - nl)
                * _impurity(np.float64(n - nl - (c1_total - l1)), np.float64(c1_total - l1), params.criterion)
            ) / n
            gain = parent - float(child)
            if best is None or gain > best.gain:
                best = _Split(int(f), t, gain, idx[left], idx[~left])
        return best

    Xs = X[np.ix_(idx, cand)]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    ys = y[idx][order]
    pos = np.cumsum(ys, axis=0, dtype=np.float64)
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    pl = pos[:-1, :]
    nr = n - nl
    pr = c1_total - pl
    valid = xs[1:, :] > xs[:-1, :]
    valid &= (nl >= msl) & (nr >= msl)
    if not valid.any():
        return None
    child = (
        nl * _impurity(nl - pl, pl, params.criterion)
        + nr * _impurity(nr - pr, pr, params.criterion)
    ) / n
    gain = np.where(valid, parent - child, -np.inf)
    pos_best = np.argmax(gain, axis=0)  # first max per column: lowest threshold
    col_gain = gain[pos_best, np.arange(len(cand))]
    j = int(np.argmax(col_gain))  # first max: lowest feature index (cand sorted)
    if not np.isfinite(col_gain[j]):
        return None
    i = int(pos_best[j])
    a, b = float(xs[i, j]), float(xs[i + 1, j])
    t = (a + b) / 2.0
    if t >= b:
        t = a
    feat = int(cand[j])
    left_mask = X[idx, feat] <= t
    return _Split(feat, t, float(col_gain[j]), idx[left_mask], idx[~left_mask])


@dataclass
class TreeModel:
    params: TreeParams
    seed: int
    n_features: int
    nodes: List[dict] = field(default_factory=list)

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.float64)
        if not self.nodes:
            out.fill(0.5)
            return out
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            nid, rows = stack.pop()
            if rows.size == 0:
                continue
            node = self.nodes[nid]
            if "leaf" in node:
                c0, c1 = node["leaf"]
                out[rows] = c1 / (c0 + c1)
            else:
                mask = X[rows, node["feature"]] <= node["threshold"]
                stack.append((node["left"], rows[mask]))
                stack.append((node["right"], rows[~mask]))
        return out

    @property
    def leaf_count(self) -> int:
        return sum(1 for n in self.nodes if "leaf" in n)

    def to_dict(self):
        return {"n_features": self.n_features, "nodes": self.nodes}

    @classmethod
    def from_dict(cls, params: TreeParams, seed: int, d: dict) -> "TreeModel":
        return cls(params, seed, d["n_features"], d["nodes"])


def _leaf(y, idx) -> dict:
    c1 = int(y[idx].sum())
    return {"leaf": [int(idx.size) - c1, c1]}


def fit_tree(X: np.ndarray, y: np.ndarray, params: TreeParams, seed: int) -> TreeModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(stable_seed(seed, "tree-grow"))
    model = TreeModel(params, seed, X.shape[1])
    nodes = model.nodes
    all_idx = np.arange(X.shape[0])

    def splittable(idx, depth) -> bool:
        if idx.size < params.min_samples_split or idx.size < 2 * params.min_samples_leaf:
            return False
        if params.max_depth is not None and depth >= params.max_depth:
            return False
        c1 = int(y[idx].sum())
        return 0 < c1 < idx.size  # pure nodes stop

    def new_node() -> int:
        nodes.append(None)
        return len(nodes) - 1

    if params.max_leaf_nodes is None:
        stack = [(new_node(), all_idx, 0)]
        while stack:
            nid, idx, depth = stack.pop()
            split = _find_split(X, y, idx, params, rng) if splittable(idx, depth) else None
            if split is None:
                nodes[nid] = _leaf(y, idx)
                continue
            lid, rid = new_node(), new_node()
            nodes[nid] = {
                "feature": split.feature,
                "threshold": split.threshold,
                "left": lid,
                "right": rid,
            }
            stack.append((rid, split.right, depth + 1))
            stack.append((lid, split.left, depth + 1))
        return model

    # best-first growth under a leaf budget
    n_total = X.shape[0]
    counter = itertools.count()
    root = new_node()
    nodes[root] = _leaf(y, all_idx)
    heap = []

    def push(nid, idx, depth):
        if not splittable(idx, depth):
            return
        split = _find_split(X, y, idx, params, rng)
        if split is None:
            return
        weighted = idx.size / n_total * split.gain
        heapq.heappush(heap, (-weighted, next(counter), nid, depth, split))

    push(root, all_idx, 0)
    leaves = 1
    while heap and leaves < params.max_leaf_nodes:
        _, _, nid, depth, split = heapq.heappop(heap)
        lid, rid = new_node(), new_node()
        nodes[lid] = _leaf(y, split.left)
        nodes[rid] = _leaf(y, split.right)
        nodes[nid] = {
            "feature": split.feature,
            "threshold": split.threshold,
            "left": lid,
            "right": rid,
        }
        leaves += 1
        push(lid, split.left, depth + 1)
        push(rid, split.right, depth + 1)
    return model
