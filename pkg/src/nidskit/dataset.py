"""Columnar labeled dataset handling: CSV I/O, normalization, encoding,
label grouping, sampling, splitting.

Tables are treated as immutable; every transform returns a new table and
appends a record to the provenance log. `replay` re-applies a log to the
raw table and must reproduce the transformed table exactly, which keeps
any experiment result traceable to its inputs.
"""

import csv
import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ._util import fmt_real
from .errors import (
    DataError,
    HeaderMismatch,
    RaggedRow,
    SchemaMismatch,
    TargetExceedsPopulation,
    UnknownAttack,
)
from .features import (
    LYCOS_SCHEMA,
    META_FAMILY,
    MODEL_SCHEMA,
    Feature,
    FeatureSchema,
)

LABEL_COLUMN = "label"
BENIGN = "Benign"
MALICIOUS = "Malicious"

_NONFINITE = {"infinity", "-infinity", "inf", "-inf", "nan", "-nan", ""}
_IP_PROT_COL = re.compile(r"^ip_prot_(\d+|other)$")


@dataclass
class DatasetTable:
    schema: FeatureSchema
    rows: np.ndarray  # (n, d) float64 aligned to schema.model_names
    labels: Optional[np.ndarray]  # (n,) object array of str, or None
    meta: Dict[str, np.ndarray] = field(default_factory=dict)  # meta-family columns
    provenance: List[dict] = field(default_factory=list)
    source: str = ""

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.schema.model_names.index(name)]

    def class_counts(self) -> Dict[str, int]:
        if self.labels is None:
            return {}
        names, counts = np.unique(self.labels.astype(str), return_counts=True)
        return dict(zip(names.tolist(), counts.tolist()))

    def with_record(self, record: dict) -> List[dict]:
        return self.provenance + [record]


def table_from_vectors(vectors, source: str = "") -> DatasetTable:
    """Build an extraction-schema table from finalized FeatureVectors."""
    rows = np.vstack([v.values for v in vectors]) if vectors else np.empty((0, len(MODEL_SCHEMA)))
    meta = {
        "src_ip": np.array([v.meta.src_ip for v in vectors], dtype=object),
        "src_port": np.array([v.meta.src_port for v in vectors], dtype=object),
        "dst_ip": np.array([v.meta.dst_ip for v in vectors], dtype=object),
        "timestamp": np.array([v.meta.first_ts for v in vectors], dtype=object),
    }
    return DatasetTable(
        schema=LYCOS_SCHEMA,
        rows=rows,
        labels=None,
        meta=meta,
        provenance=[{"op": "extract", "source": source, "n": len(vectors)}],
        source=source,
    )


# ---------------------------------------------------------------------------
# CSV I/O


def save_csv(table: DatasetTable, path) -> None:
    """Write schema-stamped CSV: comment line, header, 17-sig-digit reals."""
    meta_names = [f.name for f in table.schema.features if f.family == META_FAMILY]
    header = list(table.schema.names)
    if table.labels is not None:
        header.append(LABEL_COLUMN)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# schema={table.schema.hash} version={table.schema.version}\n")
        w = csv.writer(f, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        w.writerow(header)
        model_index = {n: i for i, n in enumerate(table.schema.model_names)}
        for i in range(table.n):
            row = []
            for name in table.schema.names:
                if name in model_index:
                    row.append(fmt_real(table.rows[i, model_index[name]]))
                else:
                    v = table.meta[name][i]
                    row.append(fmt_real(v) if isinstance(v, float) else str(v))
            if table.labels is not None:
                row.append(str(table.labels[i]))
            w.writerow(row)


def _feature_for(name: str) -> Feature:
    if name in LYCOS_SCHEMA:
        return LYCOS_SCHEMA.features[LYCOS_SCHEMA.index(name)]
    if _IP_PROT_COL.match(name):
        return Feature(name, "header", "indicator")
    return Feature(name, "count", "")


def load_csv(path, expect_schema: Optional[FeatureSchema] = None,
             column_map: Optional[Dict[str, str]] = None) -> DatasetTable:
    """Read a dataset CSV.

    Unknown column names are accepted as generic numeric features unless
    expect_schema demands an exact header. Non-finite cells (the legacy
    Infinity/NaN artifacts) are replaced by 0 and counted per column.
    """
    source = os.path.basename(str(path))
    with open(path, "r", newline="", encoding="utf-8") as f:
        declared_hash = None
        pos = f.tell()
        first = f.readline()
        if first.startswith("#"):
            m = re.search(r"schema=(\w+)", first)
            declared_hash = m.group(1) if m else None
        else:
            f.seek(pos)
        reader = csv.reader(f)
        try:
            raw_header = next(reader)
        except StopIteration:
            raise HeaderMismatch(f"{source}: no header row") from None
        header = [h.strip() for h in raw_header]
        if column_map:
            header = [column_map.get(h, h) for h in header]

        # collapse exact duplicate columns (a known artifact of legacy files)
        keep_idx, seen, dup_dropped = [], set(), 0
        for i, h in enumerate(header):
            if h in seen:
                dup_dropped += 1
                continue
            seen.add(h)
            keep_idx.append(i)
        header = [header[i] for i in keep_idx]

        has_label = header and header[-1] == LABEL_COLUMN
        col_names = header[:-1] if has_label else header
        if not col_names:
            raise HeaderMismatch(f"{source}: header has no feature columns")

        meta_names = [n for n in col_names if n in LYCOS_SCHEMA and LYCOS_SCHEMA.family(n) == META_FAMILY]
        feat_names = [n for n in col_names if n not in meta_names]
        schema = FeatureSchema(
            LYCOS_SCHEMA.version if all(n in LYCOS_SCHEMA or _IP_PROT_COL.match(n) for n in col_names) else "custom",
            tuple(_feature_for(n) for n in col_names),
        )
        if expect_schema is not None and tuple(col_names) != tuple(expect_schema.names):
            raise HeaderMismatch(
                f"{source}: header does not match expected schema {expect_schema.hash}"
            )

        meta_set = set(meta_names)
        rows: List[List[float]] = []
        labels: List[str] = []
        meta_cols: Dict[str, list] = {n: [] for n in meta_names}
        nonfinite: Dict[str, int] = {}
        expected_cells = len(raw_header)
        for line_no, raw in enumerate(reader, start=3 if declared_hash else 2):
            if not raw:
                continue
            if len(raw) != expected_cells:
                raise RaggedRow(line_no, f"expected {expected_cells} cells, got {len(raw)}")
            cells = [raw[i] for i in keep_idx]
            if has_label:
                labels.append(raw[len(raw_header) - 1].strip())
            vals = []
            for name, cell in zip(col_names, cells):
                if name in meta_set:
                    if name in ("src_port",):
                        meta_cols[name].append(int(cell))
                    elif name == "timestamp":
                        meta_cols[name].append(float(cell))
                    else:
                        meta_cols[name].append(cell)
                    continue
                text = cell.strip()
                if text.lower() in _NONFINITE:
                    nonfinite[name] = nonfinite.get(name, 0) + 1
                    vals.append(0.0)
                    continue
                try:
                    x = float(text)
                except ValueError:
                    raise RaggedRow(line_no, f"cell {name!r}={text!r} is not numeric") from None
                if not math.isfinite(x):
                    nonfinite[name] = nonfinite.get(name, 0) + 1
                    x = 0.0
                vals.append(x)
            rows.append(vals)

    arr = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(feat_names)))
    record = {"op": "load_csv", "source": source, "n": len(rows)}
    if declared_hash:
        record["declared_schema"] = declared_hash
    if dup_dropped:
        record["duplicate_columns_dropped"] = dup_dropped
    if nonfinite:
        record["nonfinite_replaced"] = dict(sorted(nonfinite.items()))
    return DatasetTable(
        schema=schema,
        rows=arr,
        labels=np.array(labels, dtype=object) if has_label else None,
        meta={k: np.array(v, dtype=object) for k, v in meta_cols.items()},
        provenance=[record],
        source=source,
    )


def save_provenance(table: DatasetTable, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in table.provenance:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# transforms


def project_model(table: DatasetTable) -> DatasetTable:
    """Drop meta/identifier columns, keeping the 77 model features.

    Idempotent on an already-projected table; any other schema raises
    SchemaMismatch.
    """
    if table.schema.hash == MODEL_SCHEMA.hash:
        return table
    if table.schema.hash != LYCOS_SCHEMA.hash:
        raise SchemaMismatch(
            f"cannot project schema {table.schema.hash}; expected {LYCOS_SCHEMA.hash}"
        )
    return DatasetTable(
        schema=MODEL_SCHEMA,
        rows=table.rows,
        labels=table.labels,
        meta={},
        provenance=table.with_record({"op": "project_model"}),
        source=table.source,
    )


@dataclass(frozen=True)
class MinMaxParams:
    mins: np.ndarray
    maxs: np.ndarray
    schema_hash: str


def minmax_fit(train: DatasetTable) -> MinMaxParams:
    return MinMaxParams(
        mins=train.rows.min(axis=0) if train.n else np.zeros(train.d),
        maxs=train.rows.max(axis=0) if train.n else np.zeros(train.d),
        schema_hash=train.schema.hash,
    )


def minmax_apply(table: DatasetTable, params: MinMaxParams) -> DatasetTable:
    """x' = (x - min) / (max - min); constant features map to 0.

    Values outside the fitted range are not clamped, so an external test
    set can land outside [0, 1].
    """
    if params.schema_hash != table.schema.hash:
        raise SchemaMismatch(
            f"normalization fitted on schema {params.schema_hash}, "
            f"table has {table.schema.hash}"
        )
    span = params.maxs - params.mins
    safe = np.where(span == 0, 1.0, span)
    rows = (table.rows - params.mins) / safe
    rows[:, span == 0] = 0.0
    return DatasetTable(
        schema=table.schema,
        rows=rows,
        labels=table.labels,
        meta=table.meta,
        provenance=table.with_record(
            {"op": "minmax", "mins": params.mins.tolist(), "maxs": params.maxs.tolist()}
        ),
        source=table.source,
    )


def onehot_protocol(table: DatasetTable, rare_threshold: float = 0.001) -> DatasetTable:
    """One-hot encode ip_prot; categories under the frequency threshold
    share a single ip_prot_other indicator.

    Indicator columns are ordered by descending frequency (ties by code).
    """
    if "ip_prot" not in table.schema:
        raise SchemaMismatch("table has no ip_prot column to encode")
    col = table.column("ip_prot")
    codes, counts = np.unique(col, return_counts=True)
    freqs = counts / max(1, table.n)
    order = sorted(range(len(codes)), key=lambda i: (-freqs[i], codes[i]))
    common = [int(codes[i]) for i in order if freqs[i] >= rare_threshold]
    rare = [int(codes[i]) for i in order if freqs[i] < rare_threshold]

    new_feats = [Feature(f"ip_prot_{c}", "header", "indicator") for c in common]
    if rare:
        new_feats.append(Feature("ip_prot_other", "header", "indicator"))
    schema = table.schema.replace_feature("ip_prot", new_feats)

    j = table.schema.model_names.index("ip_prot")
    blocks = [table.rows[:, :j]]
    for c in common:
        blocks.append((col == c).astype(np.float64)[:, None])
    if rare:
        blocks.append(np.isin(col, rare).astype(np.float64)[:, None])
    blocks.append(table.rows[:, j + 1 :])
    return DatasetTable(
        schema=schema,
        rows=np.hstack(blocks),
        labels=table.labels,
        meta=table.meta,
        provenance=table.with_record({"op": "onehot", "threshold": rare_threshold,
                                      "categories": common, "other": bool(rare)}),
        source=table.source,
    )


def binarize_labels(table: DatasetTable) -> DatasetTable:
    """Group every attack label under a single Malicious label."""
    labels = np.where(table.labels.astype(str) == BENIGN, BENIGN, MALICIOUS).astype(object)
    return DatasetTable(
        schema=table.schema,
        rows=table.rows,
        labels=labels,
        meta=table.meta,
        provenance=table.with_record({"op": "binarize"}),
        source=table.source,
    )


def _take(table: DatasetTable, idx: np.ndarray, record: dict) -> DatasetTable:
    return DatasetTable(
        schema=table.schema,
        rows=table.rows[idx],
        labels=None if table.labels is None else table.labels[idx],
        meta={k: v[idx] for k, v in table.meta.items()},
        provenance=table.with_record(record),
        source=table.source,
    )


def single_attack_subset(table: DatasetTable, attack: str, ratio: int = 10,
                         seed: int = 0) -> DatasetTable:
    """All rows of one attack plus a seeded benign undersample.

    The benign sample has size min(ratio * n_attack, n_benign); original
    row order is preserved.
    """
    labels = table.labels.astype(str)
    attack_idx = np.flatnonzero(labels == attack)
    if attack_idx.size == 0:
        raise UnknownAttack(f"attack {attack!r} not present in {table.source or 'table'}")
    benign_idx = np.flatnonzero(labels == BENIGN)
    k = min(ratio * attack_idx.size, benign_idx.size)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(benign_idx.size, size=k, replace=False)
    keep = np.sort(np.concatenate([attack_idx, benign_idx[chosen]]))
    return _take(table, keep, {"op": "single_attack_subset", "attack": attack,
                               "ratio": ratio, "seed": seed})


def subsample_benign(table: DatasetTable, target: int, seed: int = 0) -> DatasetTable:
    """Uniform without-replacement benign undersample; attacks all kept."""
    labels = table.labels.astype(str)
    benign_idx = np.flatnonzero(labels == BENIGN)
    if target > benign_idx.size:
        raise TargetExceedsPopulation(
            f"requested {target} benign rows, only {benign_idx.size} available"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(benign_idx.size, size=target, replace=False)
    keep = np.sort(np.concatenate([np.flatnonzero(labels != BENIGN), benign_idx[chosen]]))
    return _take(table, keep, {"op": "subsample_benign", "target": target, "seed": seed})


def split_train_test(table: DatasetTable, fraction: float = 0.8, seed: int = 0):
    """Seeded uniform split into (train, test); not stratified."""
    n = table.n
    if n < 2:
        raise DataError("need at least 2 rows to split")
    n_train = int(round(fraction * n))
    n_train = max(1, min(n - 1, n_train))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    rec = {"op": "split", "fraction": fraction, "seed": seed}
    return (
        _take(table, train_idx, {**rec, "side": "train"}),
        _take(table, test_idx, {**rec, "side": "test"}),
    )


def subset_features(table: DatasetTable, names: Sequence[str]) -> DatasetTable:
    """Column projection in the given order (used by feature sweeps)."""
    idx = [table.schema.model_names.index(n) for n in names]
    feats = tuple(table.schema.features[table.schema.index(n)] for n in names)
    return DatasetTable(
        schema=FeatureSchema(table.schema.version, feats),
        rows=table.rows[:, idx],
        labels=table.labels,
        meta={},
        provenance=table.with_record({"op": "subset_features", "names": list(names)}),
        source=table.source,
    )


# ---------------------------------------------------------------------------
# provenance replay


def replay(raw: DatasetTable, log: Sequence[dict]) -> DatasetTable:
    """Re-apply a provenance log to the raw table it was recorded from."""
    table = raw
    for rec in log:
        op = rec["op"]
        if op in ("extract", "load_csv"):
            continue
        if op == "project_model":
            table = project_model(table)
        elif op == "minmax":
            params = MinMaxParams(
                np.array(rec["mins"]), np.array(rec["maxs"]), table.schema.hash
            )
            table = minmax_apply(table, params)
        elif op == "onehot":
            table = onehot_protocol(table, rec["threshold"])
        elif op == "binarize":
            table = binarize_labels(table)
        elif op == "single_attack_subset":
            table = single_attack_subset(table, rec["attack"], rec["ratio"], rec["seed"])
        elif op == "subsample_benign":
            table = subsample_benign(table, rec["target"], rec["seed"])
        elif op == "split":
            train, test = split_train_test(table, rec["fraction"], rec["seed"])
            table = train if rec["side"] == "train" else test
        elif op == "subset_features":
            table = subset_features(table, rec["names"])
        elif op == "label":
            raise ValueError("labeling cannot be replayed without the schedule")
        else:
            raise ValueError(f"unknown provenance op {op!r}")
    return table
