"""The four classifier families plus grid search.

Families are addressed by short name: lda, dt, rf, xgb. Fitting is
deterministic under (params, seed); models serialize to self-describing
JSON records whose round-trip reproduces bit-identical predictions.
A single-class training set does not raise: it yields a constant-score
model and a DegenerateTraining warning.
"""

import itertools
import json
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .._util import stable_seed
from ..errors import DegenerateTraining
from ..metrics import confusion, mcc
from .boost import BoostedModel, BoostParams, fit_boosted, logistic_loss
from .forest import ForestModel, ForestParams, fit_forest
from .lda import LdaModel, LdaParams, fit_lda
from .tree import TreeModel, TreeParams, fit_tree

FAMILIES = ("lda", "dt", "rf", "xgb")

MODEL_FORMAT = "nidskit-model"
MODEL_FORMAT_VERSION = 1

_PARAM_TYPES = {"lda": LdaParams, "dt": TreeParams, "rf": ForestParams, "xgb": BoostParams}
_FITTERS = {"lda": fit_lda, "dt": fit_tree, "rf": fit_forest, "xgb": fit_boosted}
_MODEL_TYPES = {"lda": LdaModel, "dt": TreeModel, "rf": ForestModel, "xgb": BoostedModel}

# Hyperparameter search spaces, enumerated in key order below.
GRIDS_FULL = {
    "lda": {
        "solver": ["svd", "lsqr", "eigen"],
        "shrinkage": [None, "auto", 0.1, 0.5, 0.9],
    },
    "dt": {
        "criterion": ["gini", "entropy"],
        "splitter": ["best", "random"],
        "max_depth": [None, 20],
        "min_samples_split": [2, 4, 8, 16],
        "min_samples_leaf": [1, 2, 4],
        "max_features": [None, "sqrt", "log2"],
        "max_leaf_nodes": [None, 10_000, 1_000_000],
    },
    "rf": {
        "criterion": ["gini", "entropy"],
        "max_depth": [None, 10],
        "min_samples_split": [4, 16],
        "max_features": [None, "sqrt", "log2"],
        "n_estimators": [10, 50],
    },
    "xgb": {
        "max_depth": [3, 6, 12],
        "n_estimators": [10, 50],
        "learning_rate": [0.1, 0.3, 1],
        "booster": ["gbtree", "gblinear"],
        "min_child_weight": [0.5, 1, 2],
        "gamma": [0, 1, 10],
    },
}

# Trimmed spaces for desk-scale runs and CI; same shape, fewer cells.
GRIDS_QUICK = {
    "lda": {"solver": ["svd"], "shrinkage": [None, "auto"]},
    "dt": {"criterion": ["gini", "entropy"], "max_depth": [None, 20]},
    "rf": {"criterion": ["gini"], "max_depth": [None, 10], "n_estimators": [10]},
    "xgb": {"max_depth": [3, 6], "n_estimators": [10], "learning_rate": [0.3], "gamma": [0]},
}

GRID_PRESETS = {"full": GRIDS_FULL, "quick": GRIDS_QUICK}


@dataclass
class ConstantModel:
    """Degenerate-training fallback: every row scores the single class."""

    params: dict
    seed: int
    score: float

    def predict_scores(self, X) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], self.score, dtype=np.float64)

    def to_dict(self):
        return {"score": self.score}


@dataclass(frozen=True)
class ScoredPrediction:
    scores: np.ndarray  # higher = more malicious
    labels: np.ndarray  # scores >= threshold
    threshold: float = 0.5


def make_params(family: str, overrides: Optional[dict] = None):
    cls = _PARAM_TYPES[family]
    return cls(**(overrides or {}))


def fit(family: str, params, X, y, seed: int):
    """Train one model; single-class y yields a warned constant model."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if isinstance(params, dict):
        params = make_params(family, params)
    y = np.asarray(y, dtype=np.int64)
    classes = np.unique(y)
    if classes.size < 2:
        warnings.warn(
            f"training set has a single class ({classes.tolist()}); returning a constant model",
            DegenerateTraining,
        )
        return ConstantModel(params.to_dict(), seed, float(classes[0]) if classes.size else 0.5)
    return _FITTERS[family](np.asarray(X, dtype=np.float64), y, params, seed)


def predict(model, X, threshold: float = 0.5) -> ScoredPrediction:
    scores = model.predict_scores(np.asarray(X, dtype=np.float64))
    return ScoredPrediction(scores, (scores >= threshold).astype(np.int64), threshold)


# ---------------------------------------------------------------------------
# serialization


def _family_of(model) -> str:
    for fam, cls in _MODEL_TYPES.items():
        if isinstance(model, cls):
            return fam
    if isinstance(model, ConstantModel):
        return "constant"
    raise TypeError(f"not a known model type: {type(model)!r}")


def serialize_model(model) -> bytes:
    family = _family_of(model)
    params = model.params if isinstance(model.params, dict) else model.params.to_dict()
    record = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "family": family,
        "params": params,
        "seed": model.seed,
        "model": model.to_dict(),
    }
    return json.dumps(record, sort_keys=True).encode("utf-8")


def deserialize_model(data: bytes):
    record = json.loads(data.decode("utf-8"))
    if record.get("format") != MODEL_FORMAT:
        raise ValueError("not a model record")
    family = record["family"]
    if family == "constant":
        return ConstantModel(record["params"], record["seed"], record["model"]["score"])
    params = make_params(family, record["params"])
    return _MODEL_TYPES[family].from_dict(params, record["seed"], record["model"])


# ---------------------------------------------------------------------------
# grid search


def grid_cells(space: dict):
    """Deterministic enumeration of a search space, in key order."""
    keys = list(space.keys())
    for combo in itertools.product(*(space[k] for k in keys)):
        yield dict(zip(keys, combo))


@dataclass
class GridSearchResult:
    family: str
    best_params: dict
    best_score: float
    model: object
    cells_evaluated: int


def grid_search(family: str, space: dict, X, y, seed: int,
                subset_fraction: float = 0.2, threshold: float = 0.5) -> GridSearchResult:
    """Exhaustive search scored by MCC on an internal split.

    Every cell trains on 75% of a seeded subset (subset_fraction of the
    training data) and is scored on the other 25%; ties keep the first
    cell in enumeration order. The winner is refit on the full set.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    rng = np.random.default_rng(stable_seed(seed, "grid-subset"))
    n_sub = max(4, int(round(subset_fraction * n)))
    n_sub = min(n, n_sub)
    sub = np.sort(rng.choice(n, size=n_sub, replace=False))
    split_rng = np.random.default_rng(stable_seed(seed, "grid-split"))
    perm = split_rng.permutation(n_sub)
    n_fit = max(1, min(n_sub - 1, int(round(0.75 * n_sub))))
    fit_idx = sub[np.sort(perm[:n_fit])]
    val_idx = sub[np.sort(perm[n_fit:])]

    best_params, best_score = None, -np.inf
    cells = 0
    fit_seed = stable_seed(seed, "grid-fit")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateTraining)
        for cell in grid_cells(space):
            cells += 1
            model = fit(family, cell, X[fit_idx], y[fit_idx], fit_seed)
            pred = predict(model, X[val_idx], threshold)
            score = mcc(*confusion(y[val_idx], pred.labels))
            if score > best_score:
                best_params, best_score = cell, score
    final = fit(family, best_params, X, y, seed)
    return GridSearchResult(family, best_params, float(best_score), final, cells)


__all__ = [
    "FAMILIES",
    "GRIDS_FULL",
    "GRIDS_QUICK",
    "GRID_PRESETS",
    "BoostParams",
    "BoostedModel",
    "ConstantModel",
    "ForestModel",
    "ForestParams",
    "GridSearchResult",
    "LdaModel",
    "LdaParams",
    "ScoredPrediction",
    "TreeModel",
    "TreeParams",
    "deserialize_model",
    "fit",
    "grid_cells",
    "grid_search",
    "logistic_loss",
    "make_params",
    "predict",
    "serialize_model",
]
