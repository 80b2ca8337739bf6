"""Report serialization: JSON, per-trial CSV, box-plot stats CSV, figure.

All writers are deterministic (sorted keys, repr floats, no timestamps) so
two runs with the same seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import __version__

BOX_FIELDS = ("mean", "median", "q25", "q75", "min", "max")


def report_to_dict(report):
    return {
        "version": __version__,
        "config": report.config,
        "methods": list(report.methods),
        "aggregates": report.aggregates,
        "failures": report.failures,
        "failure_messages": report.failure_messages,
        "valid": report.valid,
        "trials": [asdict(t) for t in report.trials],
    }


def write_report_json(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_trials_csv(report, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "trial",
                "accuracy_inductive",
                "accuracy_transductive",
                "accuracy_baseline",
                "em_iterations",
                "non_converged",
                "collapsed_components",
                "zero_alpha_classes",
            ]
        )
        for t in report.trials:
            writer.writerow(
                [
                    t.trial_index,
                    "" if t.accuracy_inductive is None else repr(t.accuracy_inductive),
                    "" if t.accuracy_transductive is None else repr(t.accuracy_transductive),
                    "" if t.accuracy_baseline is None else repr(t.accuracy_baseline),
                    "" if t.em_iterations is None else t.em_iterations,
                    int(t.non_converged),
                    t.collapsed_components,
                    ";".join(str(c) for c in t.zero_alpha_classes),
                ]
            )


def write_boxstats_csv(report, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method"] + list(BOX_FIELDS))
        for method in report.methods:
            agg = report.aggregates.get(method)
            if agg is None:
                continue
            writer.writerow([method] + [repr(agg[f]) for f in BOX_FIELDS])


_FIELD = {
    "inductive": "accuracy_inductive",
    "transductive": "accuracy_transductive",
    "baseline": "accuracy_baseline",
}


def render_boxplot(report, path):
    """Box plot of per-trial accuracies, one box per method."""
    data, labels = [], []
    for method in report.methods:
        values = [getattr(t, _FIELD[method]) for t in report.trials]
        values = [v for v in values if v is not None]
        if values:
            data.append(values)
            labels.append(method)
    if not data:
        return False
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.boxplot(data, tick_labels=labels, whis=(0, 100))
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.set_title(f"per-trial accuracy over {len(report.trials)} splits")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def write_report(report, outdir, fmt="both", figure=True, stem="report"):
    """Write the requested report artifacts; returns the list of paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        p = outdir / f"{stem}.json"
        write_report_json(report, p)
        written.append(p)
    if fmt in ("csv", "both"):
        p = outdir / f"{stem}_trials.csv"
        write_trials_csv(report, p)
        written.append(p)
        p = outdir / f"{stem}_boxstats.csv"
        write_boxstats_csv(report, p)
        written.append(p)
        if figure:
            p = outdir / f"{stem}_boxplot.png"
            if render_boxplot(report, p):
                written.append(p)
    return written
