"""Experiment orchestration: within/cross-dataset matrices, single-attack
protocols, and mRMR feature-count sweeps.

Cells are independent jobs with seeds derived by stable hashing of
(config seed, train, test, family, task, repetition), so adding cells
never perturbs existing ones and a bounded worker pool gives the same
persisted metrics as a serial run. Results append to a line-delimited
JSON file as they complete; rerunning a config against the same results
file skips finished cells (idempotent resume).

Persisted records deliberately carry no wall-clock values or absolute
paths; timings belong to the run manifest. That is what makes two seeded
runs byte-identical.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._util import fmt_real, stable_seed
from .dataset import (
    BENIGN,
    DatasetTable,
    binarize_labels,
    load_csv,
    minmax_apply,
    minmax_fit,
    single_attack_subset,
    split_train_test,
    subset_features,
)
from .errors import AttackAbsent, DataError, SchemaIncompatible
from .learners import FAMILIES, GRID_PRESETS, fit, grid_search, predict
from .metrics import MetricsReport, score_predictions
from .mrmr import mrmr_rank, sweep_counts

GROUPED_BINARY = "grouped_binary"
SINGLE_ATTACK = "single_attack"
FEATURE_SWEEP = "feature_sweep"


@dataclass
class ExperimentConfig:
    datasets: Dict[str, str]  # name -> csv path, insertion-ordered
    families: Tuple[str, ...] = FAMILIES
    seed: int = 0
    grid: str = "full"  # full | quick | none
    split_fraction: float = 0.8
    repetitions: int = 3  # single-attack protocol
    ratio: int = 10
    attacks: Tuple[str, ...] = ()  # empty: every attack shared by all datasets
    feature_counts: Tuple[int, ...] = (1, 2, 3, 4, 5, 10, 20)
    jobs: int = 1


_LIST_KEYS = {"families", "attacks", "feature_counts"}
_INT_KEYS = {"seed", "repetitions", "ratio", "jobs"}
_FLOAT_KEYS = {"split_fraction"}


def parse_config(path) -> ExperimentConfig:
    """Key=value config file; `dataset.<name> = <csv path>`, `#` comments."""
    datasets: Dict[str, str] = {}
    kwargs: dict = {}
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{line_no}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key.startswith("dataset."):
                name = key[len("dataset."):].strip()
                datasets[name] = value if os.path.isabs(value) else os.path.join(base, value)
            elif key in _LIST_KEYS:
                items = tuple(v.strip() for v in value.split(",") if v.strip())
                kwargs[key] = tuple(int(v) for v in items) if key == "feature_counts" else items
            elif key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key == "grid":
                if value not in ("full", "quick", "none"):
                    raise DataError(f"{path}:{line_no}: grid must be full, quick, or none")
                kwargs[key] = value
            else:
                raise DataError(f"{path}:{line_no}: unknown key {key!r}")
    if not datasets:
        raise DataError(f"{path}: no dataset.<name> entries")
    return ExperimentConfig(datasets=datasets, **kwargs)


def load_tables(config: ExperimentConfig) -> Dict[str, DatasetTable]:
    tables = {}
    for name, path in config.datasets.items():
        table = load_csv(path)
        if table.labels is None:
            raise DataError(f"dataset {name!r} ({path}) has no label column")
        table.source = name
        tables[name] = table
    return tables


# ---------------------------------------------------------------------------
# results persistence


class ResultsSink:
    """Append-only line-delimited results with resume support."""

    def __init__(self, path):
        self.path = path
        self.done = set()
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if line:
                        self.done.add(json.loads(line)["cell_id"])

    def has(self, cell_id: str) -> bool:
        return cell_id in self.done

    def append(self, record: dict) -> None:
        self.done.add(record["cell_id"])
        if self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")

    def records(self) -> List[dict]:
        if not self.path or not os.path.exists(self.path):
            return []
        with open(self.path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]


@dataclass
class RunStats:
    executed: int = 0
    skipped: int = 0
    errors: int = 0


def _metrics_dict(report: MetricsReport) -> dict:
    return report.to_dict()


def _grid_or_fit(family: str, grid: str, X, y, seed: int):
    """Returns (model, chosen_params, grid_cells_evaluated)."""
    if grid == "none":
        model = fit(family, {}, X, y, seed)
        return model, {}, 0
    space = GRID_PRESETS[grid][family]
    result = grid_search(family, space, X, y, seed)
    return result.model, result.best_params, result.cells_evaluated


def _normalized_pair(train: DatasetTable, test: DatasetTable):
    params = minmax_fit(train)
    return minmax_apply(train, params), minmax_apply(test, params)


def _labels01(table: DatasetTable) -> np.ndarray:
    return (table.labels.astype(str) != BENIGN).astype(np.int64)


# ---------------------------------------------------------------------------
# grouped-binary matrix


def _pairs(config: ExperimentConfig) -> List[Tuple[str, str]]:
    names = list(config.datasets.keys())
    return [(a, b) for a in names for b in names]


def _matrix_cell(tables, config, train_name, test_name, family,
                 feature_names: Optional[List[str]] = None, k: Optional[int] = None):
    task = GROUPED_BINARY if k is None else FEATURE_SWEEP
    cell_seed = stable_seed(config.seed, train_name, test_name, family, task, 0, k or 0)
    train_src = tables[train_name]
    test_src = tables[test_name]
    if feature_names is not None:
        train_src = subset_features(train_src, feature_names)
        test_src = subset_features(test_src, feature_names)
    if train_name == test_name:
        split_seed = stable_seed(config.seed, train_name, "within-split")
        train, test = split_train_test(train_src, config.split_fraction, split_seed)
    else:
        train, test = train_src, test_src
    train = binarize_labels(train)
    test = binarize_labels(test)
    train, test = _normalized_pair(train, test)
    model, params, n_cells = _grid_or_fit(family, config.grid, train.rows,
                                          _labels01(train), cell_seed)
    pred = predict(model, test.rows)
    report = score_predictions(pred.scores, _labels01(test))
    record = {
        "type": "result",
        "task": task,
        "train": train_name,
        "test": test_name,
        "family": family,
        "feature_mode": "full" if k is None else f"mrmr:{k}",
        "seed": cell_seed,
        "params": params,
        "grid_cells": n_cells,
        "metrics": _metrics_dict(report),
        "train_n": train.n,
        "test_n": test.n,
        "schema": train.schema.hash,
        "train_provenance": train.provenance,
        "test_provenance": test.provenance,
    }
    if k is not None:
        record["k"] = k
        record["features"] = feature_names
    return record


def _run_cells(cells, worker, config: ExperimentConfig, sink: ResultsSink) -> Tuple[List[dict], RunStats]:
    """Execute cell descriptors in deterministic order, skipping done ones."""
    stats = RunStats()
    todo = []
    for cell in cells:
        if sink.has(cell["cell_id"]):
            stats.skipped += 1
        else:
            todo.append(cell)
    records: List[dict] = []

    def run_one(cell):
        if "error" in cell:
            return {
                "type": "error",
                "cell_id": cell["cell_id"],
                "error": cell["error"],
                "detail": cell["detail"],
            }
        try:
            rec = worker(cell)
        except DataError as exc:
            return {
                "type": "error",
                "cell_id": cell["cell_id"],
                "error": type(exc).__name__,
                "detail": str(exc),
            }
        rec["cell_id"] = cell["cell_id"]
        return rec

    def collect(rec):
        sink.append(rec)
        records.append(rec)
        if rec["type"] == "error":
            stats.errors += 1
        else:
            stats.executed += 1

    if config.jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            for rec in pool.map(run_one, todo):
                collect(rec)
    else:
        for cell in todo:
            collect(run_one(cell))
    return records, stats


def run_matrix(tables: Dict[str, DatasetTable], config: ExperimentConfig,
               sink: Optional[ResultsSink] = None) -> Tuple[List[dict], RunStats]:
    """Every (train, test, family) grouped-binary cell over the config's
    datasets: within-dataset pairs split 80:20, cross-dataset pairs train
    on the entire source. Incompatible schemas yield error records."""
    sink = sink or ResultsSink(None)
    cells = []
    for train_name, test_name in _pairs(config):
        compatible = tables[train_name].schema.hash == tables[test_name].schema.hash
        for family in config.families:
            cell_id = f"{GROUPED_BINARY}|{train_name}|{test_name}|{family}|full|0"
            if not compatible:
                err = SchemaIncompatible(train_name, test_name)
                cells.append({"cell_id": cell_id, "error": "SchemaIncompatible",
                              "detail": str(err)})
            else:
                cells.append({"cell_id": cell_id, "train": train_name,
                              "test": test_name, "family": family})

    def worker(cell):
        return _matrix_cell(tables, config, cell["train"], cell["test"], cell["family"])

    return _run_cells(cells, worker, config, sink)


# ---------------------------------------------------------------------------
# single-attack protocol


def shared_attacks(tables: Dict[str, DatasetTable]) -> List[str]:
    """Attack labels present in every dataset, sorted."""
    sets = []
    for table in tables.values():
        labels = set(table.class_counts().keys())
        labels.discard(BENIGN)
        sets.append(labels)
    common = set.intersection(*sets) if sets else set()
    return sorted(common)


def _attack_cell(tables, config, train_name, test_name, attack, family,
                 best_two: bool = False):
    train_src = tables[train_name]
    test_src = tables[test_name]
    feature_names = None
    if best_two:
        rank_seed = stable_seed(config.seed, train_name, attack, "ranking-subset")
        rank_table = single_attack_subset(train_src, attack, config.ratio, rank_seed)
        ranking = mrmr_rank(binarize_labels(rank_table), k=min(2, rank_table.d))
        feature_names = ranking.names

    reps = []
    for rep in range(config.repetitions):
        rep_seed = stable_seed(config.seed, train_name, test_name, family,
                               SINGLE_ATTACK, rep)
        train_sub = single_attack_subset(
            train_src, attack, config.ratio, stable_seed(rep_seed, "train-subset")
        )
        counts_train = train_sub.class_counts()
        if train_name == test_name:
            train, test = split_train_test(
                train_sub, config.split_fraction, stable_seed(rep_seed, "within-split")
            )
            counts_test = counts_train
        else:
            test = single_attack_subset(
                test_src, attack, config.ratio, stable_seed(rep_seed, "test-subset")
            )
            counts_test = test.class_counts()
            train = train_sub
        if feature_names is not None:
            train = subset_features(train, feature_names)
            test = subset_features(test, feature_names)
        train = binarize_labels(train)
        test = binarize_labels(test)
        train, test = _normalized_pair(train, test)
        model, params, n_cells = _grid_or_fit(family, config.grid, train.rows,
                                              _labels01(train), rep_seed)
        pred = predict(model, test.rows)
        report = score_predictions(pred.scores, _labels01(test))
        reps.append({
            "repetition": rep,
            "seed": rep_seed,
            "params": params,
            "metrics": _metrics_dict(report),
            "train_subset_counts": counts_train,
            "test_subset_counts": counts_test,
        })
    best = max(range(len(reps)), key=lambda i: reps[i]["metrics"]["mcc"])
    record = {
        "type": "result",
        "task": SINGLE_ATTACK,
        "train": train_name,
        "test": test_name,
        "attack": attack,
        "family": family,
        "feature_mode": "best_two" if best_two else "full",
        "repetitions": reps,
        "aggregate": reps[best]["metrics"],
        "aggregate_repetition": best,
        "schema": tables[train_name].schema.hash,
    }
    if feature_names is not None:
        record["features"] = feature_names
    return record


def run_single_attack(tables: Dict[str, DatasetTable], config: ExperimentConfig,
                      sink: Optional[ResultsSink] = None,
                      best_two: bool = False) -> Tuple[List[dict], RunStats]:
    """Three seeded repetitions of 10:1 subsetting + fit + evaluate per
    (pair, attack, family); the aggregate is the max-MCC repetition."""
    sink = sink or ResultsSink(None)
    if config.attacks:
        for attack in config.attacks:
            for name, table in tables.items():
                if attack not in table.class_counts():
                    raise AttackAbsent(attack, name)
        attacks = list(config.attacks)
    else:
        attacks = shared_attacks(tables)

    mode = "best_two" if best_two else "full"
    cells = []
    for train_name, test_name in _pairs(config):
        compatible = tables[train_name].schema.hash == tables[test_name].schema.hash
        for attack in attacks:
            for family in config.families:
                cell_id = f"{SINGLE_ATTACK}|{train_name}|{test_name}|{attack}|{family}|{mode}"
                if not compatible:
                    cells.append({"cell_id": cell_id, "error": "SchemaIncompatible",
                                  "detail": str(SchemaIncompatible(train_name, test_name))})
                else:
                    cells.append({"cell_id": cell_id, "train": train_name,
                                  "test": test_name, "attack": attack, "family": family})

    def worker(cell):
        return _attack_cell(tables, config, cell["train"], cell["test"],
                            cell["attack"], cell["family"], best_two)

    return _run_cells(cells, worker, config, sink)


# ---------------------------------------------------------------------------
# feature sweep


def run_feature_sweep(tables: Dict[str, DatasetTable], config: ExperimentConfig,
                      sink: Optional[ResultsSink] = None) -> Tuple[List[dict], RunStats]:
    """Grouped-binary cells over nested mRMR prefixes of sizes
    feature_counts, ranked on each training source."""
    sink = sink or ResultsSink(None)
    rankings = {}
    for name, table in tables.items():
        k_max = min(max(config.feature_counts), table.d)
        rankings[name] = mrmr_rank(binarize_labels(table), k=k_max)

    cells = []
    for train_name, test_name in _pairs(config):
        compatible = tables[train_name].schema.hash == tables[test_name].schema.hash
        prefixes = sweep_counts(rankings[train_name],
                                [k for k in config.feature_counts
                                 if k <= len(rankings[train_name])])
        ks = [k for k in config.feature_counts if k <= len(rankings[train_name])]
        for k, names in zip(ks, prefixes):
            for family in config.families:
                cell_id = f"{FEATURE_SWEEP}|{train_name}|{test_name}|{family}|mrmr:{k}|0"
                if not compatible:
                    cells.append({"cell_id": cell_id, "error": "SchemaIncompatible",
                                  "detail": str(SchemaIncompatible(train_name, test_name))})
                else:
                    cells.append({"cell_id": cell_id, "train": train_name,
                                  "test": test_name, "family": family,
                                  "k": k, "features": list(names)})

    def worker(cell):
        return _matrix_cell(tables, config, cell["train"], cell["test"],
                            cell["family"], feature_names=cell["features"], k=cell["k"])

    return _run_cells(cells, worker, config, sink)


# ---------------------------------------------------------------------------
# summaries


def write_matrix_summary(records: Sequence[dict], path) -> None:
    """Summary CSV shaped like the within/cross results table."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("train_set,test_set,classifier,mcc,f1,auroc\n")
        for rec in records:
            if rec.get("type") != "result":
                continue
            m = rec["metrics"]
            f.write(
                f"{rec['train']},{rec['test']},{rec['family']},"
                f"{fmt_real(m['mcc'])},{fmt_real(m['f1'])},{fmt_real(m['auroc'])}\n"
            )


def write_attack_summary(records: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("train_set,test_set,attack,classifier,mcc,f1,auroc\n")
        for rec in records:
            if rec.get("type") != "result":
                continue
            m = rec["aggregate"]
            f.write(
                f"{rec['train']},{rec['test']},{rec['attack']},{rec['family']},"
                f"{fmt_real(m['mcc'])},{fmt_real(m['f1'])},{fmt_real(m['auroc'])}\n"
            )


def write_sweep_summary(records: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("train_set,test_set,classifier,n_features,mcc,f1,auroc\n")
        for rec in records:
            if rec.get("type") != "result":
                continue
            m = rec["metrics"]
            f.write(
                f"{rec['train']},{rec['test']},{rec['family']},{rec['k']},"
                f"{fmt_real(m['mcc'])},{fmt_real(m['f1'])},{fmt_real(m['auroc'])}\n"
            )
