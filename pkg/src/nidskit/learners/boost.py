"""Gradient boosting on the logistic loss with second-order tree stages.

Tree stages use the standard gradient/hessian leaf weights
w = -G / (H + lambda) and the split gain

    1/2 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - (GL+GR)^2/(HL+HR+lambda)) - gamma

split only when the gain is positive and both children carry at least
min_child_weight hessian mass. The "gblinear" booster replaces trees
with sequential regularized coordinate updates on the same loss.

Staged invariant: raw prediction after t stages equals the raw
prediction after t-1 stages plus learning_rate times stage t's output.
"""

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np


@dataclass(frozen=True)
class BoostParams:
    booster: str = "gbtree"  # gbtree | gblinear
    max_depth: int = 6
    n_estimators: int = 50
    learning_rate: float = 0.3
    # 0.5 (the low end of the usual search range) so that tiny datasets,
    # where each sample carries hessian mass <= 0.25, can still split
    min_child_weight: float = 0.5
    gamma: float = 0.0
    reg_lambda: float = 1.0
    base_score: float = 0.5

    def to_dict(self):
        return {
            "booster": self.booster,
            "max_depth": self.max_depth,
            "n_estimators": self.n_estimators,
            "learning_rate": self.learning_rate,
            "min_child_weight": self.min_child_weight,
            "gamma": self.gamma,
            "reg_lambda": self.reg_lambda,
            "base_score": self.base_score,
        }


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def logistic_loss(raw: np.ndarray, y: np.ndarray) -> float:
    """Mean logistic loss of raw scores against 0/1 labels."""
    z = np.clip(raw, -500, 500)
    return float(np.mean(np.log1p(np.exp(-z)) * y + np.log1p(np.exp(z)) * (1 - y)))


def _grow_stage_tree(X, g, h, idx, depth, params: BoostParams, nodes: List[dict]) -> int:
    lam = params.reg_lambda
    G = float(g[idx].sum())
    H = float(h[idx].sum())

    def leaf() -> int:
        nodes.append({"leaf": -G / (H + lam)})
        return len(nodes) - 1

    if depth >= params.max_depth or idx.size < 2:
        return leaf()

    Xs = X[idx]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    gl = np.cumsum(g[idx][order], axis=0)[:-1]
    hl = np.cumsum(h[idx][order], axis=0)[:-1]
    gr = G - gl
    hr = H - hl
    valid = xs[1:] > xs[:-1]
    valid &= (hl >= params.min_child_weight) & (hr >= params.min_child_weight)
    if not valid.any():
        return leaf()
    gain = 0.5 * (gl**2 / (hl + lam) + gr**2 / (hr + lam) - G**2 / (H + lam)) - params.gamma
    gain = np.where(valid, gain, -np.inf)
    pos_best = np.argmax(gain, axis=0)
    col_gain = gain[pos_best, np.arange(X.shape[1])]
    j = int(np.argmax(col_gain))
    if not (col_gain[j] > 0.0):
        return leaf()
    i = int(pos_best[j])
    a, b = float(xs[i, j]), float(xs[i + 1, j])
    t = (a + b) / 2.0
    if t >= b:
        t = a
    mask = X[idx, j] <= t
    nid = len(nodes)
    nodes.append(None)  # placeholder, children appended next
    lid = _grow_stage_tree(X, g, h, idx[mask], depth + 1, params, nodes)
    rid = _grow_stage_tree(X, g, h, idx[~mask], depth + 1, params, nodes)
    nodes[nid] = {"feature": j, "threshold": t, "left": lid, "right": rid}
    return nid


def _tree_raw(nodes: List[dict], root: int, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        nid, rows = stack.pop()
        if rows.size == 0:
            continue
        node = nodes[nid]
        if "leaf" in node:
            out[rows] = node["leaf"]
        else:
            mask = X[rows, node["feature"]] <= node["threshold"]
            stack.append((node["left"], rows[mask]))
            stack.append((node["right"], rows[~mask]))
    return out


@dataclass
class BoostedModel:
    params: BoostParams
    seed: int
    n_features: int
    tree_stages: List[dict] = field(default_factory=list)  # {"nodes": [...], "root": int}
    linear_stages: List[dict] = field(default_factory=list)  # {"weights": [...], "bias": float}

    @property
    def base_raw(self) -> float:
        p = self.params.base_score
        return math.log(p / (1.0 - p))

    def stage_raw(self, stage_index: int, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.params.booster == "gbtree":
            st = self.tree_stages[stage_index]
            return _tree_raw(st["nodes"], st["root"], X)
        st = self.linear_stages[stage_index]
        return X @ np.asarray(st["weights"]) + st["bias"]

    def n_stages(self) -> int:
        return len(self.tree_stages) if self.params.booster == "gbtree" else len(self.linear_stages)

    def predict_raw(self, X: np.ndarray, n_stages: int = None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        total = self.n_stages() if n_stages is None else n_stages
        raw = np.full(X.shape[0], self.base_raw, dtype=np.float64)
        for t in range(total):
            raw += self.params.learning_rate * self.stage_raw(t, X)
        return raw

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.predict_raw(X))

    def to_dict(self):
        return {
            "n_features": self.n_features,
            "tree_stages": self.tree_stages,
            "linear_stages": self.linear_stages,
        }

    @classmethod
    def from_dict(cls, params: BoostParams, seed: int, d: dict) -> "BoostedModel":
        return cls(params, seed, d["n_features"], d["tree_stages"], d["linear_stages"])


def fit_boosted(X: np.ndarray, y: np.ndarray, params: BoostParams, seed: int) -> BoostedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    model = BoostedModel(params, seed, d)
    raw = np.full(n, model.base_raw, dtype=np.float64)
    lam = params.reg_lambda

    if params.booster == "gbtree":
        all_idx = np.arange(n)
        for _ in range(params.n_estimators):
            p = _sigmoid(raw)
            g = p - y
            h = p * (1.0 - p)
            nodes: List[dict] = []
            root = _grow_stage_tree(X, g, h, all_idx, 0, params, nodes)
            model.tree_stages.append({"nodes": nodes, "root": root})
            raw += params.learning_rate * _tree_raw(nodes, root, X)
        return model

    if params.booster != "gblinear":
        raise ValueError(f"unknown booster {params.booster!r}")
    weights = np.zeros(d)
    bias = 0.0
    for _ in range(params.n_estimators):
        dw = np.zeros(d)
        p = _sigmoid(raw)
        g = p - y
        h = p * (1.0 - p)
        db = -g.sum() / (h.sum() + lam)
        bias += params.learning_rate * db
        raw = raw + params.learning_rate * db
        for j in range(d):
            p = _sigmoid(raw)
            g = p - y
            h = p * (1.0 - p)
            xj = X[:, j]
            delta = -(float(g @ xj) + lam * weights[j]) / (float(h @ (xj * xj)) + lam)
            weights[j] += params.learning_rate * delta
            dw[j] = delta
            raw = raw + params.learning_rate * delta * xj
        model.linear_stages.append({"weights": dw.tolist(), "bias": db})
    return model
