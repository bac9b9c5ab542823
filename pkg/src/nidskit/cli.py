"""Command-line entry point.

Subcommands map onto the pipeline: extract, label, prep, select, train,
evaluate, matrix, attack, sweep, stats, viz. Exit codes: 0 success,
1 usage error, 2 data error, 3 internal error.

Every run writes a manifest.json next to its outputs with the tool
version, the resolved flag snapshot, sha256 digests of inputs and
outputs, and timings. Rerunning with identical inputs and seeds must
reproduce identical output digests; randomness always flows from an
explicit seed, never the clock.
"""

import argparse
import json
import os
import sys
import time
import traceback

import numpy as np

from . import __version__
from ._util import fmt_real, sha256_file, stable_seed
from .analysis import kde_density, pca_fit, pca_project, unique_row_counts, unique_value_counts
from .dataset import (
    BENIGN,
    MinMaxParams,
    binarize_labels,
    load_csv,
    minmax_apply,
    minmax_fit,
    onehot_protocol,
    project_model,
    save_csv,
    save_provenance,
    single_attack_subset,
    subsample_benign,
    table_from_vectors,
)
from .errors import DataError
from .experiments import (
    ExperimentConfig,
    ResultsSink,
    load_tables,
    parse_config,
    run_feature_sweep,
    run_matrix,
    run_single_attack,
    write_attack_summary,
    write_matrix_summary,
    write_sweep_summary,
)
from .features import FlowFeatureConfig, finalize
from .figures import (
    FigureLayer,
    render_figure,
    render_metric_bars,
    render_metric_lines,
    write_svg,
)
from .flows import assemble
from .labeling import class_count_report, compile_schedule, label_table, parse_schedule
from .learners import FAMILIES, deserialize_model, fit, grid_search, GRID_PRESETS, predict, serialize_model
from .metrics import score_predictions
from .mrmr import mrmr_rank
from .pcap import DecodeStats, read_packets

TRAINED_FORMAT = "nidskit-trained"


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# manifest


def _write_manifest(out_dir, command, args, inputs, outputs, timings, extra=None):
    manifest = {
        "tool": "nidskit",
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {os.path.basename(str(p)): {"path": str(p), "sha256": sha256_file(p)}
                   for p in inputs},
        "outputs": {os.path.basename(str(p)): {"path": str(p), "sha256": sha256_file(p)}
                    for p in outputs},
        "timings": timings,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _verify_resume_inputs(out_dir, inputs):
    """On resume, refuse to mix results computed from different inputs."""
    path = os.path.join(out_dir, "manifest.json")
    if not os.path.exists(path):
        return
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    for p in inputs:
        name = os.path.basename(str(p))
        old = manifest.get("inputs", {}).get(name)
        if old and old["sha256"] != sha256_file(p):
            raise DataError(
                f"input {name} changed since the previous run in {out_dir}; "
                "use a fresh output directory"
            )


def _out_dir_of(path) -> str:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    return d


def _require_file(path, what):
    if not os.path.exists(path):
        raise DataError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract(args):
    t0 = time.perf_counter()
    _require_file(args.pcap, "capture file")
    cfg = FlowFeatureConfig(
        activity_timeout=args.activity_timeout,
        bulk_gap=args.bulk_gap,
        subflow_gap=args.subflow_gap,
    )
    stats = DecodeStats()
    packets = read_packets(args.pcap, stats)
    vectors = [
        finalize(flow, cfg)
        for flow in assemble(packets, idle_timeout=args.idle_timeout,
                             hard_timeout=args.hard_timeout)
    ]
    table = table_from_vectors(vectors, source=os.path.basename(args.pcap))
    save_csv(table, args.out)
    out_dir = _out_dir_of(args.out)
    _write_manifest(
        out_dir, "extract", args, [args.pcap], [args.out],
        {"total_s": time.perf_counter() - t0},
        extra={"packets": stats.packets, "skipped_frames": stats.skips,
               "flows": len(vectors)},
    )
    print(f"extract: {stats.packets} packets -> {len(vectors)} flows -> {args.out}")
    return 0


def cmd_label(args):
    t0 = time.perf_counter()
    _require_file(args.flows, "flows CSV")
    _require_file(args.schedule, "schedule file")
    table = load_csv(args.flows)
    matcher = compile_schedule(parse_schedule(args.schedule))
    labeled = label_table(table, matcher)
    save_csv(labeled, args.out)
    counts = dict(class_count_report(labeled))
    out_dir = _out_dir_of(args.out)
    _write_manifest(
        out_dir, "label", args, [args.flows, args.schedule], [args.out],
        {"total_s": time.perf_counter() - t0},
        extra={"class_counts": counts, "dropped": table.n - labeled.n},
    )
    print(f"label: {labeled.n} flows labeled ({table.n - labeled.n} dropped) -> {args.out}")
    return 0


def cmd_prep(args):
    t0 = time.perf_counter()
    _require_file(args.data, "dataset CSV")
    table = load_csv(args.data)
    if table.labels is None:
        raise DataError(f"{args.data} has no label column; run `label` first")
    table = project_model(table)
    if args.benign_target is not None:
        if args.seed is None:
            raise DataError("--benign-target requires --seed")
        table = subsample_benign(table, args.benign_target, args.seed)
    if args.onehot:
        table = onehot_protocol(table, args.rare_threshold)
    save_csv(table, args.out)
    save_provenance(table, args.out + ".provenance.jsonl")
    out_dir = _out_dir_of(args.out)
    _write_manifest(
        out_dir, "prep", args, [args.data], [args.out, args.out + ".provenance.jsonl"],
        {"total_s": time.perf_counter() - t0},
        extra={"rows": table.n, "columns": table.d},
    )
    print(f"prep: {table.n} rows x {table.d} features -> {args.out}")
    return 0


def cmd_select(args):
    t0 = time.perf_counter()
    _require_file(args.data, "dataset CSV")
    table = load_csv(args.data)
    if table.labels is None:
        raise DataError(f"{args.data} has no label column")
    if args.attack:
        if args.seed is None:
            raise DataError("--attack subsetting requires --seed")
        table = single_attack_subset(table, args.attack, args.ratio, args.seed)
    table = binarize_labels(table)
    k = args.k if args.k is not None else min(20, table.d)
    ranking = mrmr_rank(table, k, bins=args.bins, criterion=args.criterion)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(ranking.to_json())
        f.write("\n")
    out_dir = _out_dir_of(args.out)
    _write_manifest(out_dir, "select", args, [args.data], [args.out],
                    {"total_s": time.perf_counter() - t0},
                    extra={"ranking": ranking.names})
    print(f"select: top-{k} features -> {args.out}")
    print("  " + ", ".join(ranking.names))
    return 0


def _parse_param_overrides(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise DataError(f"--param expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        raw = raw.strip()
        if raw.lower() in ("none", "null"):
            value = None
        elif raw.lower() in ("true", "false"):
            value = raw.lower() == "true"
        else:
            try:
                value = int(raw)
            except ValueError:
                try:
                    value = float(raw)
                except ValueError:
                    value = raw
        out[key.strip()] = value
    return out


def cmd_train(args):
    t0 = time.perf_counter()
    _require_file(args.data, "dataset CSV")
    table = load_csv(args.data)
    if table.labels is None:
        raise DataError(f"{args.data} has no label column")
    table = binarize_labels(table)
    params = minmax_fit(table)
    normalized = minmax_apply(table, params)
    y = (normalized.labels.astype(str) != BENIGN).astype(np.int64)
    if args.grid == "none":
        overrides = _parse_param_overrides(args.param)
        model = fit(args.family, overrides, normalized.rows, y, args.seed)
        chosen = overrides
        cells = 0
    else:
        space = GRID_PRESETS[args.grid][args.family]
        result = grid_search(args.family, space, normalized.rows, y, args.seed)
        model, chosen, cells = result.model, result.best_params, result.cells_evaluated
    record = {
        "format": TRAINED_FORMAT,
        "version": 1,
        "family": args.family,
        "schema": table.schema.hash,
        "feature_names": list(table.schema.model_names),
        "minmax": {"mins": params.mins.tolist(), "maxs": params.maxs.tolist()},
        "chosen_params": chosen,
        "grid_cells": cells,
        "seed": args.seed,
        "model": json.loads(serialize_model(model).decode("utf-8")),
    }
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(record, f, sort_keys=True)
        f.write("\n")
    out_dir = _out_dir_of(args.out)
    _write_manifest(out_dir, "train", args, [args.data], [args.out],
                    {"total_s": time.perf_counter() - t0},
                    extra={"chosen_params": chosen, "grid_cells": cells})
    print(f"train: {args.family} model ({cells} grid cells) -> {args.out}")
    return 0


def cmd_evaluate(args):
    t0 = time.perf_counter()
    _require_file(args.model, "model file")
    _require_file(args.data, "dataset CSV")
    with open(args.model, "r", encoding="utf-8") as f:
        record = json.load(f)
    if record.get("format") != TRAINED_FORMAT:
        raise DataError(f"{args.model} is not a trained-model file")
    table = load_csv(args.data)
    if table.labels is None:
        raise DataError(f"{args.data} has no label column")
    if list(table.schema.model_names) != record["feature_names"]:
        raise DataError("model was trained on a different feature schema")
    table = binarize_labels(table)
    mm = MinMaxParams(np.array(record["minmax"]["mins"]),
                      np.array(record["minmax"]["maxs"]), table.schema.hash)
    normalized = minmax_apply(table, mm)
    model = deserialize_model(json.dumps(record["model"]).encode("utf-8"))
    pred = predict(model, normalized.rows, args.threshold)
    y = (normalized.labels.astype(str) != BENIGN).astype(np.int64)
    report = score_predictions(pred.scores, y, args.threshold)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    out_dir = _out_dir_of(args.out)
    _write_manifest(out_dir, "evaluate", args, [args.model, args.data], [args.out],
                    {"total_s": time.perf_counter() - t0}, extra=report.to_dict())
    print(f"evaluate: mcc={report.mcc:.4f} f1={report.f1:.4f} auroc={report.auroc:.4f}")
    return 0


def _experiment_config(args) -> ExperimentConfig:
    _require_file(args.config, "experiment config")
    config = parse_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.grid is not None:
        config.grid = args.grid
    if args.jobs is not None:
        config.jobs = args.jobs
    return config


def _run_experiment(args, runner, summary_writer, figure_builder, command):
    t0 = time.perf_counter()
    os.makedirs(args.out, exist_ok=True)
    config = _experiment_config(args)
    inputs = [args.config] + list(config.datasets.values())
    for p in inputs:
        _require_file(p, "input")
    _verify_resume_inputs(args.out, inputs)
    tables = load_tables(config)
    sink = ResultsSink(os.path.join(args.out, "results.jsonl"))
    _, stats = runner(tables, config, sink)
    all_records = sink.records()
    summary_path = os.path.join(args.out, "summary.csv")
    summary_writer(all_records, summary_path)
    figure_paths = figure_builder(all_records, config, args.out)
    _write_manifest(
        args.out, command, args, inputs,
        [sink.path, summary_path] + figure_paths,
        {"total_s": time.perf_counter() - t0},
        extra={"cells_executed": stats.executed, "cells_skipped": stats.skipped,
               "cells_errored": stats.errors},
    )
    print(f"{command}: {stats.executed} cells run, {stats.skipped} resumed, "
          f"{stats.errors} errors -> {args.out}")
    return 0


def _matrix_figures(records, config, out_dir):
    results = [r for r in records if r.get("type") == "result"]
    if not results:
        return []
    groups, series = [], {}
    for rec in results:
        group = f"{rec['train']}->{rec['test']}"
        if group not in groups:
            groups.append(group)
    for fam in config.families:
        values = []
        for group in groups:
            found = [r for r in results
                     if f"{r['train']}->{r['test']}" == group and r["family"] == fam]
            values.append(found[0]["metrics"]["mcc"] if found else 0.0)
        series[fam] = values
    path = os.path.join(out_dir, "matrix_mcc.svg")
    write_svg(render_metric_bars(groups, series, "MCC", "Within/cross-dataset MCC"), path)
    return [path]


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text)


def _attack_figures(records, config, out_dir):
    results = [r for r in records if r.get("type") == "result"]
    paths = []
    attacks = sorted({r["attack"] for r in results})
    for attack in attacks:
        subset = [r for r in results if r["attack"] == attack]
        groups = []
        for rec in subset:
            group = f"{rec['train']}->{rec['test']}"
            if group not in groups:
                groups.append(group)
        series = {}
        for fam in config.families:
            series[fam] = [
                next((r["aggregate"]["mcc"] for r in subset
                      if f"{r['train']}->{r['test']}" == g and r["family"] == fam), 0.0)
                for g in groups
            ]
        path = os.path.join(out_dir, f"attack_{_slug(attack)}.svg")
        write_svg(render_metric_bars(groups, series, "MCC", attack), path)
        paths.append(path)
    return paths


def _sweep_figures(records, config, out_dir):
    results = [r for r in records if r.get("type") == "result"]
    paths = []
    for fam in config.families:
        subset = [r for r in results if r["family"] == fam]
        if not subset:
            continue
        pairs = []
        for rec in subset:
            pair = f"{rec['train']}->{rec['test']}"
            if pair not in pairs:
                pairs.append(pair)
        ks = sorted({r["k"] for r in subset})
        series = {}
        for pair in pairs:
            series[pair] = [
                next((r["metrics"]["mcc"] for r in subset
                      if f"{r['train']}->{r['test']}" == pair and r["k"] == k), 0.0)
                for k in ks
            ]
        path = os.path.join(out_dir, f"sweep_{fam}.svg")
        write_svg(render_metric_lines(ks, series, "number of features", "MCC", fam), path)
        paths.append(path)
    return paths


def cmd_matrix(args):
    return _run_experiment(args, run_matrix, write_matrix_summary, _matrix_figures, "matrix")


def cmd_attack(args):
    def runner(tables, config, sink):
        return run_single_attack(tables, config, sink, best_two=args.best_two)

    return _run_experiment(args, runner, write_attack_summary, _attack_figures, "attack")


def cmd_sweep(args):
    return _run_experiment(args, run_feature_sweep, write_sweep_summary, _sweep_figures, "sweep")


def cmd_stats(args):
    t0 = time.perf_counter()
    _require_file(args.data, "dataset CSV")
    table = load_csv(args.data)
    if table.labels is None:
        raise DataError(f"{args.data} has no label column")
    os.makedirs(args.out, exist_ok=True)
    outputs = []

    counts_path = os.path.join(args.out, "class_counts.csv")
    with open(counts_path, "w", encoding="utf-8", newline="") as f:
        f.write("label,count\n")
        for label, count in class_count_report(table):
            f.write(f"{label},{count}\n")
    outputs.append(counts_path)

    if args.features:
        features = [s.strip() for s in args.features.split(",")]
        for name in features:
            if name not in table.schema.model_names:
                raise DataError(f"unknown feature {name!r}")
        unique_path = os.path.join(args.out, "unique_counts.csv")
        counts = unique_value_counts(table, features)
        with open(unique_path, "w", encoding="utf-8", newline="") as f:
            f.write("label," + ",".join(features) + "\n")
            for label in sorted(counts):
                f.write(label + "," + ",".join(str(counts[label][x]) for x in features) + "\n")
        outputs.append(unique_path)

    rows_path = os.path.join(args.out, "unique_rows.csv")
    row_counts = unique_row_counts(table)
    with open(rows_path, "w", encoding="utf-8", newline="") as f:
        f.write("label,distinct_rows\n")
        for label in sorted(row_counts):
            f.write(f"{label},{row_counts[label]}\n")
    outputs.append(rows_path)

    _write_manifest(args.out, "stats", args, [args.data], outputs,
                    {"total_s": time.perf_counter() - t0})
    print(f"stats: {len(outputs)} reports -> {args.out}")
    return 0


def _viz_points(table, features, proj):
    if proj is not None:
        return pca_project(table, proj)
    xi = table.schema.model_names.index(features[0])
    yi = table.schema.model_names.index(features[1])
    return table.rows[:, [xi, yi]]


def cmd_viz(args):
    t0 = time.perf_counter()
    _require_file(args.data, "dataset CSV")
    if not args.pca and not args.features:
        raise DataError("viz needs either --features f1,f2 or --pca")
    tables = {os.path.splitext(os.path.basename(args.data))[0]: load_csv(args.data)}
    inputs = [args.data]
    if args.data2:
        _require_file(args.data2, "second dataset CSV")
        name2 = os.path.splitext(os.path.basename(args.data2))[0]
        tables[name2] = load_csv(args.data2)
        inputs.append(args.data2)
    for name, t in tables.items():
        if t.labels is None:
            raise DataError(f"dataset {name} has no label column")
    os.makedirs(args.out, exist_ok=True)

    names = list(tables.keys())
    first = tables[names[0]]
    proj = None
    features = None
    if args.pca:
        # normalize with the first dataset's fit, then project onto its PCA
        mm = minmax_fit(first)
        tables = {n: minmax_apply(t, mm) for n, t in tables.items()}
        proj = pca_fit(tables[names[0]])
        xlabel, ylabel = "component 1", "component 2"
    else:
        features = [s.strip() for s in args.features.split(",")]
        if len(features) != 2:
            raise DataError("--features needs exactly two comma-separated names")
        for name in features:
            if name not in first.schema.model_names:
                raise DataError(f"unknown feature {name!r}")
        xlabel, ylabel = features

    if args.attack:
        if all(args.attack not in t.class_counts() for t in tables.values()):
            raise DataError(f"attack {args.attack!r} not present in any input dataset")
        attacks = [args.attack]
    else:
        attacks = sorted(
            {lab for t in tables.values() for lab in t.class_counts() if lab != BENIGN}
        )
        if not attacks:
            raise DataError("no attack labels present to visualize")

    outputs = []
    cap = args.max_points
    for attack in attacks:
        layers = []
        for name, table in tables.items():
            mask = table.labels.astype(str) == attack
            if not mask.any():
                continue
            pts = _viz_points(table, features, proj)[mask]
            if pts.shape[0] > cap:
                rng = np.random.default_rng(stable_seed(args.seed, "viz", name, attack))
                pts = pts[np.sort(rng.choice(pts.shape[0], size=cap, replace=False))]
            layers.append(FigureLayer(name, kde_density(pts, resolution=args.resolution)))
        if not layers:
            continue
        fig_path = os.path.join(args.out, f"viz_{_slug(attack)}.svg")
        write_svg(render_figure(layers, title=attack, xlabel=xlabel, ylabel=ylabel), fig_path)
        outputs.append(fig_path)
        if args.export_grids:
            for layer in layers:
                grid_path = os.path.join(
                    args.out, f"grid_{_slug(attack)}_{_slug(layer.name)}.csv"
                )
                _export_grid(layer.grid, grid_path)
                outputs.append(grid_path)

    _write_manifest(args.out, "viz", args, inputs, outputs,
                    {"total_s": time.perf_counter() - t0})
    print(f"viz: {len(outputs)} files -> {args.out}")
    return 0


def _export_grid(grid, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        if grid.mode == "scatter":
            f.write("x,y\n")
            for x, y in grid.points:
                f.write(f"{fmt_real(x)},{fmt_real(y)}\n")
            return
        f.write("x,y,density\n")
        xs = np.linspace(grid.x_range[0], grid.x_range[1], grid.resolution)
        ys = np.linspace(grid.y_range[0], grid.y_range[1], grid.resolution)
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                f.write(f"{fmt_real(x)},{fmt_real(y)},{fmt_real(grid.values[i, j])}\n")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nidskit",
                     description="Flow-based NIDS research toolkit")
    parser.add_argument("--version", action="version", version=f"nidskit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("extract", help="extract flow features from a pcap capture")
    p.add_argument("--pcap", required=True, help="input classic-pcap capture file")
    p.add_argument("--out", required=True, help="output features CSV path")
    p.add_argument("--idle-timeout", type=float, default=120.0,
                   help="seconds of silence that close a flow (default 120)")
    p.add_argument("--hard-timeout", type=float, default=None,
                   help="maximum flow age in seconds (default: disabled)")
    p.add_argument("--activity-timeout", type=float, default=5.0,
                   help="gap in seconds separating active periods (default 5)")
    p.add_argument("--bulk-gap", type=float, default=1.0,
                   help="max gap in seconds inside a bulk transfer (default 1)")
    p.add_argument("--subflow-gap", type=float, default=1.0,
                   help="gap in seconds separating subflows (default 1)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("label", help="label flows from an attack schedule")
    p.add_argument("--flows", required=True, help="features CSV from extract")
    p.add_argument("--schedule", required=True, help="attack schedule file")
    p.add_argument("--out", required=True, help="output labeled CSV path")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("prep", help="project to model features, subsample, encode")
    p.add_argument("--data", required=True, help="labeled CSV from label")
    p.add_argument("--out", required=True, help="output model-ready CSV path")
    p.add_argument("--benign-target", type=int, default=None,
                   help="subsample the benign class to this many rows")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for benign subsampling (required with --benign-target)")
    p.add_argument("--onehot", action=argparse.BooleanOptionalAction, default=True,
                   help="one-hot encode ip_prot (default on)")
    p.add_argument("--rare-threshold", type=float, default=0.001,
                   help="frequency below which protocol codes share ip_prot_other")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("select", help="rank features with mRMR")
    p.add_argument("--data", required=True, help="model-ready labeled CSV")
    p.add_argument("--out", required=True, help="output ranking JSON path")
    p.add_argument("--k", type=int, default=None, help="ranking length (default min(20, d))")
    p.add_argument("--bins", type=int, default=16,
                   help="quantile bins for mutual information (default 16)")
    p.add_argument("--criterion", choices=["difference", "quotient"], default="difference",
                   help="mRMR objective variant (default difference)")
    p.add_argument("--attack", default=None,
                   help="rank on a single-attack subset instead of grouped labels")
    p.add_argument("--ratio", type=int, default=10,
                   help="benign:attack ratio for --attack subsets (default 10)")
    p.add_argument("--seed", type=int, default=None, help="seed for --attack subsetting")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="fit one classifier on a labeled CSV")
    p.add_argument("--data", required=True, help="model-ready labeled CSV")
    p.add_argument("--family", required=True, choices=list(FAMILIES), help="model family")
    p.add_argument("--out", required=True, help="output trained-model JSON path")
    p.add_argument("--seed", type=int, required=True, help="training seed")
    p.add_argument("--grid", choices=["none", "quick", "full"], default="none",
                   help="hyperparameter grid preset (default none)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="parameter override when --grid none (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained model on a labeled CSV")
    p.add_argument("--model", required=True, help="trained-model JSON from train")
    p.add_argument("--data", required=True, help="model-ready labeled CSV")
    p.add_argument("--out", required=True, help="output metrics JSON path")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="score threshold for the label decision (default 0.5)")
    p.set_defaults(func=cmd_evaluate)

    for name, help_text in (
        ("matrix", "run the within/cross-dataset grouped-binary matrix"),
        ("attack", "run the single-attack protocol"),
        ("sweep", "run the mRMR feature-count sweep"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--grid", choices=["none", "quick", "full"], default=None,
                       help="override the config grid preset")
        p.add_argument("--jobs", type=int, default=None, help="worker pool size")
        if name == "attack":
            p.add_argument("--best-two", action="store_true",
                           help="restrict each cell to its two best mRMR features")
            p.set_defaults(func=cmd_attack)
        elif name == "matrix":
            p.set_defaults(func=cmd_matrix)
        else:
            p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="class counts and distinct-value reports")
    p.add_argument("--data", required=True, help="labeled CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--features", default=None,
                   help="comma-separated features for distinct-value counts")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("viz", help="KDE/PCA feature-space figures")
    p.add_argument("--data", required=True, help="labeled CSV (reference dataset)")
    p.add_argument("--data2", default=None, help="second labeled CSV to overlay")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--features", default=None, help="two feature names, comma-separated")
    p.add_argument("--pca", action="store_true",
                   help="project onto the first dataset's top-2 principal components")
    p.add_argument("--attack", default=None, help="single attack label (default: all)")
    p.add_argument("--resolution", type=int, default=200,
                   help="density grid resolution per axis (default 200)")
    p.add_argument("--max-points", type=int, default=20000,
                   help="per-layer point cap before density estimation (default 20000)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the point-cap subsample (default 0)")
    p.add_argument("--export-grids", action="store_true",
                   help="also write density grids / points as CSV")
    p.set_defaults(func=cmd_viz)

    return parser


def format_reference() -> str:
    """Render the flag reference for every subcommand (docs/cli.md)."""
    old_columns = os.environ.get("COLUMNS")
    os.environ["COLUMNS"] = "100"
    try:
        parser = build_parser()
        chunks = ["# nidskit command reference", "", "```", parser.format_help().rstrip(), "```"]
        sub_action = parser._subparsers._group_actions[0]
        for name, sub in sub_action.choices.items():
            chunks += ["", f"## {name}", "", "```", sub.format_help().rstrip(), "```"]
        return "\n".join(chunks) + "\n"
    finally:
        if old_columns is None:
            del os.environ["COLUMNS"]
        else:
            os.environ["COLUMNS"] = old_columns


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except DataError as exc:
        print(f"nidskit: data error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"nidskit: data error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
