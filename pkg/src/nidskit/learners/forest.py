"""Bagging ensemble of CART trees.

Each tree trains on a bootstrap resample (with replacement, same size)
drawn from a per-tree seed derived from the forest seed, so the bootstrap
indices are reproducible from the serialized model without storing them.
max_features=None means plain bagging: every split sees all features.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .._util import stable_seed
from .tree import TreeModel, TreeParams, fit_tree


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 50
    criterion: str = "gini"
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: Optional[str] = None
    bootstrap: bool = True

    def tree_params(self) -> TreeParams:
        return TreeParams(
            criterion=self.criterion,
            splitter="best",
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
            min_samples_leaf=self.min_samples_leaf,
            max_features=self.max_features,
        )

    def to_dict(self):
        return {
            "n_estimators": self.n_estimators,
            "criterion": self.criterion,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
        }


@dataclass
class ForestModel:
    params: ForestParams
    seed: int
    n_samples: int
    trees: List[TreeModel] = field(default_factory=list)
    tree_seeds: List[int] = field(default_factory=list)

    def bootstrap_indices(self, tree_index: int) -> np.ndarray:
        """Regenerate the bootstrap sample indices used for one tree."""
        if not self.params.bootstrap:
            return np.arange(self.n_samples)
        rng = np.random.default_rng(stable_seed(self.tree_seeds[tree_index], "bootstrap"))
        return rng.integers(0, self.n_samples, size=self.n_samples)

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:
            acc += tree.predict_scores(X)
        return acc / len(self.trees)

    def to_dict(self):
        return {
            "n_samples": self.n_samples,
            "tree_seeds": self.tree_seeds,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, params: ForestParams, seed: int, d: dict) -> "ForestModel":
        trees = [
            TreeModel.from_dict(params.tree_params(), s, td)
            for s, td in zip(d["tree_seeds"], d["trees"])
        ]
        return cls(params, seed, d["n_samples"], trees, list(d["tree_seeds"]))


def fit_forest(X: np.ndarray, y: np.ndarray, params: ForestParams, seed: int) -> ForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    model = ForestModel(params, seed, X.shape[0])
    tp = params.tree_params()
    for i in range(params.n_estimators):
        tree_seed = stable_seed(seed, "forest-tree", i)
        model.tree_seeds.append(tree_seed)
        idx = model.bootstrap_indices(i)
        model.trees.append(fit_tree(X[idx], y[idx], tp, tree_seed))
    return model
