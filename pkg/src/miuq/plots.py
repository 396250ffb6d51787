"""Reliability and rejection plots rendered from a benchmark report.

Figures are written as SVG with a pinned hash salt and no embedded
date, so identical reports produce byte-identical files.  Every figure
gets a CSV companion holding the plotted numbers.
"""

from __future__ import annotations

import csv
import math
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ValidationError

SVG_HASH_SALT = "miuq-plots"
_DIAGONAL_STYLE = {"color": "0.6", "linestyle": "--", "linewidth": 1.0}


def _slug(name: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_")
    return cleaned or "unnamed"


def pooled_reliability(entries: list) -> dict:
    """Pool per-subject reliability bins into one set of bins.

    Counts add; accuracy and mean confidence are count-weighted means,
    which reproduces exactly what binning the concatenated predictions
    would give.  Empty pooled bins come back as NaN.
    """
    if not entries:
        raise ValidationError("reliability pooling needs at least one entry")
    edges = np.asarray(entries[0]["reliability"]["edges"], dtype=np.float64)
    counts = np.zeros(edges.size - 1, dtype=np.float64)
    acc_sum = np.zeros_like(counts)
    conf_sum = np.zeros_like(counts)
    for entry in entries:
        rel = entry["reliability"]
        if not np.array_equal(np.asarray(rel["edges"], dtype=np.float64), edges):
            raise ValidationError("cannot pool reliability bins with different edges")
        c = np.asarray(rel["counts"], dtype=np.float64)
        acc = np.array([0.0 if v is None else v for v in rel["accuracy"]])
        conf = np.array([0.0 if v is None else v for v in rel["mean_confidence"]])
        counts += c
        acc_sum += c * acc
        conf_sum += c * conf
    with np.errstate(invalid="ignore"):
        accuracy = np.where(counts > 0, acc_sum / np.maximum(counts, 1.0), np.nan)
        confidence = np.where(counts > 0, conf_sum / np.maximum(counts, 1.0), np.nan)
    return {
        "edges": edges,
        "counts": counts.astype(np.int64),
        "accuracy": accuracy,
        "mean_confidence": confidence,
    }


def averaged_rejection(entries: list) -> dict:
    """Average per-subject rejection curves at matching fractions.

    Subjects normally share the same fraction grid; if deduplication
    left them with different grids, each fraction is averaged over the
    subjects that report it.
    """
    if not entries:
        raise ValidationError("rejection averaging needs at least one entry")
    by_fraction: dict = {}
    for entry in entries:
        rej = entry["rejection"]
        for f, acc in zip(rej["fractions"], rej["accuracies"]):
            by_fraction.setdefault(float(f), []).append(float(acc))
    fractions = np.array(sorted(by_fraction), dtype=np.float64)
    mean = np.empty_like(fractions)
    std = np.empty_like(fractions)
    n = np.empty(fractions.size, dtype=np.int64)
    for i, f in enumerate(fractions):
        values = np.array(by_fraction[f], dtype=np.float64)
        mean[i] = values.mean()
        std[i] = values.std(ddof=1) if values.size > 1 else 0.0
        n[i] = values.size
    return {"fractions": fractions, "mean": mean, "std": std, "n_subjects": n}


def _save_figure(fig, path: Path) -> None:
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _reliability_figure(pooled: dict, title: str) -> "plt.Figure":
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot([0.0, 1.0], [0.0, 1.0], **_DIAGONAL_STYLE)
    filled = pooled["counts"] > 0
    ax.plot(
        pooled["mean_confidence"][filled],
        pooled["accuracy"][filled],
        marker="o",
        color="C0",
        linewidth=1.5,
    )
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("mean confidence")
    ax.set_ylabel("empirical accuracy")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def _rejection_figure(curve: dict, title: str) -> "plt.Figure":
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.plot(curve["fractions"], curve["mean"], marker="o", color="C1", linewidth=1.5)
    if np.any(curve["std"] > 0):
        ax.fill_between(
            curve["fractions"],
            curve["mean"] - curve["std"],
            curve["mean"] + curve["std"],
            color="C1",
            alpha=0.2,
            linewidth=0,
        )
    ax.set_xlabel("fraction of trials rejected")
    ax.set_ylabel("accuracy on retained trials")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def _write_reliability_csv(pooled: dict, path: Path) -> None:
    edges = pooled["edges"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "count", "accuracy", "mean_confidence"])
        for i in range(edges.size - 1):
            acc = pooled["accuracy"][i]
            conf = pooled["mean_confidence"][i]
            writer.writerow(
                [
                    repr(float(edges[i])),
                    repr(float(edges[i + 1])),
                    int(pooled["counts"][i]),
                    "" if math.isnan(acc) else repr(float(acc)),
                    "" if math.isnan(conf) else repr(float(conf)),
                ]
            )


def _write_rejection_csv(curve: dict, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "accuracy_mean", "accuracy_std", "n_subjects"])
        for f, m, s, n in zip(
            curve["fractions"], curve["mean"], curve["std"], curve["n_subjects"]
        ):
            writer.writerow([repr(float(f)), repr(float(m)), repr(float(s)), int(n)])


def save_report_plots(report: dict, out_dir) -> list:
    """Write reliability and rejection figures for every dataset and model.

    Returns the written paths, sorted.  Two files per figure: the SVG
    and a CSV with the plotted values.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    subjects = report.get("subjects")
    models = report.get("model_names")
    if not subjects or not models:
        raise ValidationError("report has no subject entries to plot")
    datasets = []
    for entry in subjects:
        if entry["dataset_id"] not in datasets:
            datasets.append(entry["dataset_id"])
    written = []
    for dataset in datasets:
        for model in models:
            entries = [
                e for e in subjects if e["dataset_id"] == dataset and e["model"] == model
            ]
            if not entries:
                continue
            stem = f"{_slug(dataset)}_{_slug(model)}"
            title = f"{dataset} / {model}"

            pooled = pooled_reliability(entries)
            svg = out / f"reliability_{stem}.svg"
            _save_figure(_reliability_figure(pooled, title), svg)
            csv_path = out / f"reliability_{stem}.csv"
            _write_reliability_csv(pooled, csv_path)
            written.extend([svg, csv_path])

            curve = averaged_rejection(entries)
            svg = out / f"rejection_{stem}.svg"
            _save_figure(_rejection_figure(curve, title), svg)
            csv_path = out / f"rejection_{stem}.csv"
            _write_rejection_csv(curve, csv_path)
            written.extend([svg, csv_path])
    return sorted(written)
