"""Synthetic labeled datasets for experiment-level tests.

`shifted_pair` builds two datasets that share one benign distribution
while the attack cluster sits on different axes at a different scale in
each dataset: trivially separable within a dataset, uninformative across
them. That is the cross-dataset failure mode the experiments must expose.
"""

import numpy as np

from nidskit.dataset import DatasetTable
from nidskit.features import Feature, FeatureSchema


def _schema(d):
    return FeatureSchema("custom", tuple(Feature(f"syn_f{i}", "count", "") for i in range(d)))


def _table(rows, labels, name):
    t = DatasetTable(_schema(rows.shape[1]), rows, np.array(labels, dtype=object),
                     provenance=[{"op": "extract", "source": name, "n": len(labels)}],
                     source=name)
    return t


def shifted_pair(seed=0, n_benign=1000, n_attack=250, d=6, attack="SynFlood"):
    rng = np.random.default_rng(seed)

    def build(name, dims, offset, scale):
        benign = rng.normal(0.0, 1.0, size=(n_benign, d))
        att = rng.normal(0.0, 1.0, size=(n_attack, d))
        att[:, dims] = rng.normal(offset, scale, size=(n_attack, len(dims)))
        rows = np.vstack([benign, att])
        labels = ["Benign"] * n_benign + [attack] * n_attack
        return _table(rows, labels, name)

    # same attack shape, shifted to other axes and rescaled 5x
    return build("synA", [0, 1], 6.0, 0.5), build("synB", [2, 3], 30.0, 2.5)


def labeled_corpus(seed=0, n_benign=1200, d=5):
    """One dataset with two attack classes, for single-attack protocols."""
    rng = np.random.default_rng(seed)
    benign = rng.normal(0.0, 1.0, size=(n_benign, d))
    a1 = rng.normal(0.0, 1.0, size=(80, d))
    a1[:, 0] = rng.normal(7.0, 0.4, size=80)
    a2 = rng.normal(0.0, 1.0, size=(200, d))
    a2[:, 1] = rng.normal(-6.0, 0.6, size=200)
    rows = np.vstack([benign, a1, a2])
    labels = ["Benign"] * n_benign + ["SynFlood"] * 80 + ["SynScan"] * 200
    return _table(rows, labels, "corpus")
