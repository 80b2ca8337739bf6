"""Command-line interface: run, splits, synth, upper-bound subcommands.

Configuration may come from a ``key = value`` file (``#`` comments allowed);
command-line flags override file values, and unknown keys are rejected.
Every report embeds the fully-resolved configuration, so re-running a
report's config reproduces its aggregates.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    generate_splits,
    load_dataset,
    load_splits,
    save_features_binary,
    save_splits,
)
from .errors import ConfigError, ZsigError
from .experiments import (
    ExperimentConfig,
    generate_synthetic,
    run_trials,
    run_upper_bound,
)
from .report import write_report

CONFIG_KEYS = {
    "features": str,
    "labels": str,
    "embeddings": str,
    "splits": str,
    "output": str,
    "methods": str,
    "format": str,
    "workers": int,
    "pca_dim": int,
    "mode": str,
    "lasso_lambda": float,
    "ridge": float,
    "em_tol": float,
    "em_max_iters": int,
    "metric": str,
    "seed": int,
}

RUN_DEFAULTS = {
    "output": ".",
    "methods": "inductive,transductive",
    "format": "both",
    "workers": 0,  # 0: use available hardware parallelism
    "pca_dim": 0,
    "mode": "unit",
    "lasso_lambda": 0.1,
    "ridge": None,
    "em_tol": 1e-6,
    "em_max_iters": 200,
    "metric": "overall",
    "seed": 0,
}

SYNTH_KEYS = {
    "classes": int,
    "unseen": int,
    "trials": int,
    "per_class": int,
    "dim": int,
    "edim": int,
    "separation": float,
    "fidelity": str,
    "noise": float,
}

SYNTH_DEFAULTS = {
    "classes": 12,
    "unseen": 4,
    "trials": 10,
    "per_class": 50,
    "dim": 8,
    "edim": 16,
    "separation": 6.0,
    "fidelity": "exact-linear",
    "noise": 0.2,
}


def parse_config_file(path):
    """Parse a key = value config file; unknown keys are errors."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        try:
            values[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for '{key}': '{value}'") from None
    return values


def _parse_kv(tokens, allowed, defaults):
    values = dict(defaults)
    for tok in tokens:
        if "=" not in tok:
            raise ConfigError(f"expected key=value, got '{tok}'")
        key, _, value = tok.partition("=")
        if key not in allowed:
            raise ConfigError(f"unknown parameter '{key}' (allowed: {', '.join(sorted(allowed))})")
        try:
            values[key] = allowed[key](value)
        except ValueError:
            raise ConfigError(f"bad value for '{key}': '{value}'") from None
    return values


def _resolve(args, file_values, key, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_values:
        return file_values[key]
    return default


def _add_model_flags(p):
    p.add_argument("--pca-dim", dest="pca_dim", type=int, help="PCA target dimension (0 = disabled)")
    p.add_argument("--mode", choices=["full", "diagonal", "unit"], help="covariance mode")
    p.add_argument("--lasso-lambda", dest="lasso_lambda", type=float, help="lasso weight")
    p.add_argument("--ridge", type=float, help="covariance ridge (default: scale-relative)")
    p.add_argument("--em-tol", dest="em_tol", type=float, help="EM relative LL tolerance")
    p.add_argument("--em-max-iters", dest="em_max_iters", type=int, help="EM iteration cap")
    p.add_argument("--metric", choices=["overall", "macro"], help="accuracy metric")
    p.add_argument("--seed", type=int, help="master seed for all randomness")


def build_parser():
    parser = argparse.ArgumentParser(prog="zsig", description=__doc__)
    parser.add_argument("--version", action="version", version=f"zsig {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run experiment protocols and write a report")
    run.add_argument("--config", help="key = value config file")
    run.add_argument("--features", help="features file (CSV or ZSLF binary)")
    run.add_argument("--labels", help="labels CSV")
    run.add_argument("--embeddings", help="embeddings CSV (comma-separate multiple files to fuse)")
    run.add_argument("--splits", help="splits JSON file")
    run.add_argument(
        "--synthetic",
        nargs="*",
        metavar="KEY=VALUE",
        help=f"generate a synthetic benchmark instead of loading files "
        f"(keys: {', '.join(sorted(SYNTH_KEYS))})",
    )
    run.add_argument("--methods", help="comma list from: inductive, transductive, baseline")
    run.add_argument("--output", help="output directory (default: current)")
    run.add_argument("--format", choices=["json", "csv", "both"], help="report output format")
    run.add_argument("--no-figure", action="store_true", help="skip the box-plot figure")
    run.add_argument("--workers", type=int, help="trial parallelism (1 = bit-reproducible)")
    _add_model_flags(run)

    splits = sub.add_parser("splits", help="generate a random-splits JSON file")
    group = splits.add_mutually_exclusive_group(required=True)
    group.add_argument("--count", type=int, help="number of classes (names are 0..count-1)")
    group.add_argument("--classes", help="file with one class name per line")
    splits.add_argument("--unseen", type=int, required=True, help="unseen classes per trial")
    splits.add_argument("--trials", type=int, required=True, help="number of trials")
    splits.add_argument("--seed", type=int, default=0)
    splits.add_argument("--output", required=True, help="output JSON path")

    synth = sub.add_parser("synth", help="generate synthetic dataset files")
    for key, typ in SYNTH_KEYS.items():
        if key in ("unseen", "trials"):
            continue
        synth.add_argument(f"--{key.replace('_', '-')}", type=typ, default=SYNTH_DEFAULTS[key])
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--binary-features", action="store_true", help="write features in ZSLF binary format")
    synth.add_argument("--output", required=True, help="output directory")

    ub = sub.add_parser("upper-bound", help="labeled-Gaussian upper-bound accuracy")
    ub.add_argument("--config", help="key = value config file")
    ub.add_argument("--features", help="features file")
    ub.add_argument("--labels", help="labels CSV")
    ub.add_argument("--embeddings", help="embeddings CSV (comma-separate to fuse)")
    ub.add_argument("--scope", choices=["all", "split"], default="all")
    ub.add_argument("--splits", help="splits JSON (required for --scope split)")
    ub.add_argument("--output", help="output JSON path")
    _add_model_flags(ub)

    return parser


def _load_or_synthesize(args, file_values, seed):
    if args.synthetic is not None:
        params = _parse_kv(args.synthetic, SYNTH_KEYS, SYNTH_DEFAULTS)
        dataset, _ = generate_synthetic(
            class_count=params["classes"],
            per_class=params["per_class"],
            feature_dim=params["dim"],
            embedding_dim=params["edim"],
            separation=params["separation"],
            fidelity=params["fidelity"],
            seed=seed,
            noise_level=params["noise"],
        )
        splits = generate_splits(params["classes"], params["unseen"], params["trials"], seed)
        return dataset, splits
    paths = {}
    for key in ("features", "labels", "embeddings"):
        paths[key] = _resolve(args, file_values, key, None)
        if paths[key] is None:
            raise ConfigError(f"--{key} is required (or use --synthetic)")
        for p in paths[key].split(","):
            if not Path(p).exists():
                raise ConfigError(f"{key} file not found: {p}")
    dataset = load_dataset(paths["features"], paths["labels"], paths["embeddings"].split(","))
    splits_path = _resolve(args, file_values, "splits", None)
    if splits_path is None:
        raise ConfigError("--splits is required for file-based datasets")
    if not Path(splits_path).exists():
        raise ConfigError(f"splits file not found: {splits_path}")
    splits = load_splits(splits_path, dataset.class_names)
    return dataset, splits


def _experiment_config(args, file_values):
    get = lambda key: _resolve(args, file_values, key, RUN_DEFAULTS[key])
    return ExperimentConfig(
        pca_dim=get("pca_dim"),
        covariance_mode=get("mode"),
        lasso_lambda=get("lasso_lambda"),
        ridge=get("ridge"),
        em_tol=get("em_tol"),
        em_max_iters=get("em_max_iters"),
        metric=get("metric"),
        seed=get("seed"),
    )


def cmd_run(args):
    file_values = parse_config_file(args.config) if args.config else {}
    config = _experiment_config(args, file_values)
    dataset, splits = _load_or_synthesize(args, file_values, config.seed)
    methods = [m.strip() for m in _resolve(args, file_values, "methods", RUN_DEFAULTS["methods"]).split(",") if m.strip()]
    for m in methods:
        if m not in ("inductive", "transductive", "baseline"):
            raise ConfigError(f"unknown method '{m}'")
    workers = _resolve(args, file_values, "workers", RUN_DEFAULTS["workers"])
    if workers <= 0:
        workers = os.cpu_count() or 1
    report = run_trials(dataset, splits, config, methods=methods, workers=workers)
    outdir = _resolve(args, file_values, "output", RUN_DEFAULTS["output"])
    fmt = _resolve(args, file_values, "format", RUN_DEFAULTS["format"])
    written = write_report(report, outdir, fmt=fmt, figure=not args.no_figure)
    for method in report.methods:
        agg = report.aggregates.get(method)
        if agg is None:
            print(f"{method}: no successful trials")
            continue
        print(
            f"{method}: mean={agg['mean']:.4f} median={agg['median']:.4f} "
            f"[q25={agg['q25']:.4f}, q75={agg['q75']:.4f}] over {agg['n']} trials"
        )
    if report.failures:
        print(f"warning: {report.failures} trial(s) failed and were excluded", file=sys.stderr)
    for p in written:
        print(f"wrote {p}")
    return 0 if (written and report.valid) else 1


def cmd_splits(args):
    if args.classes is not None:
        names = [line.strip() for line in Path(args.classes).read_text(encoding="utf-8").splitlines() if line.strip()]
        if not names:
            raise ConfigError(f"no class names in {args.classes}")
    else:
        if args.count < 2:
            raise ConfigError(f"--count must be >= 2; got {args.count}")
        names = [str(i) for i in range(args.count)]
    spec = generate_splits(len(names), args.unseen, args.trials, args.seed)
    save_splits(spec, names, args.output)
    print(f"wrote {args.output} ({args.trials} trials, {args.unseen} unseen of {len(names)} classes)")
    return 0


def _write_dataset_files(dataset, manifest, outdir, binary_features=False):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ids = [f"i{n:06d}" for n in range(dataset.n_instances)]
    if binary_features:
        fpath = outdir / "features.zslf"
        save_features_binary(fpath, dataset.features)
    else:
        fpath = outdir / "features.csv"
        with open(fpath, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id"] + [f"f{j}" for j in range(dataset.feature_dim)])
            for rid, row in zip(ids, dataset.features):
                writer.writerow([rid] + [repr(float(v)) for v in row])
    with open(outdir / "labels.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "class"])
        for rid, lab in zip(ids, dataset.labels):
            writer.writerow([rid, dataset.class_names[lab]])
    with open(outdir / "embeddings.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class"] + [f"e{j}" for j in range(dataset.embedding_dim)])
        for name, row in zip(dataset.class_names, dataset.embeddings):
            writer.writerow([name] + [repr(float(v)) for v in row])
    (outdir / "classes.txt").write_text("\n".join(dataset.class_names) + "\n", encoding="utf-8")
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True)
        fh.write("\n")
    return fpath


def cmd_synth(args):
    dataset, manifest = generate_synthetic(
        class_count=args.classes,
        per_class=args.per_class,
        feature_dim=args.dim,
        embedding_dim=args.edim,
        separation=args.separation,
        fidelity=args.fidelity,
        seed=args.seed,
        noise_level=args.noise,
    )
    _write_dataset_files(dataset, manifest, args.output, binary_features=args.binary_features)
    print(f"wrote dataset ({dataset.n_instances} instances, {dataset.n_classes} classes) to {args.output}")
    return 0


def cmd_upper_bound(args):
    file_values = parse_config_file(args.config) if args.config else {}
    config = _experiment_config(args, file_values)
    for key in ("features", "labels", "embeddings"):
        if _resolve(args, file_values, key, None) is None:
            raise ConfigError(f"--{key} is required")
        for p in _resolve(args, file_values, key, None).split(","):
            if not Path(p).exists():
                raise ConfigError(f"{key} file not found: {p}")
    dataset = load_dataset(
        _resolve(args, file_values, "features", None),
        _resolve(args, file_values, "labels", None),
        _resolve(args, file_values, "embeddings", None).split(","),
    )
    doc = {"version": __version__, "config": config.to_dict(), "scope": args.scope}
    if args.scope == "all":
        acc = run_upper_bound(dataset, config)
        doc["accuracy"] = acc
        print(f"upper bound (all classes): {acc:.4f}")
    else:
        splits_path = _resolve(args, file_values, "splits", None)
        if splits_path is None:
            raise ConfigError("--splits is required for --scope split")
        splits = load_splits(splits_path, dataset.class_names)
        per_trial = [run_upper_bound(dataset, config, unseen_ids=t) for t in splits.trials]
        doc["per_trial"] = per_trial
        doc["accuracy"] = float(np.mean(per_trial))
        print(f"upper bound (unseen scope, {len(per_trial)} trials): mean {doc['accuracy']:.4f}")
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")
        print(f"wrote {args.output}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": cmd_run,
        "splits": cmd_splits,
        "synth": cmd_synth,
        "upper-bound": cmd_upper_bound,
    }
    try:
        return handlers[args.command](args)
    except ZsigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
