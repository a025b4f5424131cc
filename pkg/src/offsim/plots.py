"""Figure rendering for the report path: bar charts of prediction quality,
speedup, and memory traffic per configuration, written as PNG files next to
the aggregated CSV."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _labels(summary_rows):
    out = []
    for r in summary_rows:
        lbl = r["predictor"]
        if r["hermes"] != "off":
            lbl += f"+{r['hermes']}@{r['issue_latency']}"
        out.append(lbl)
    return out


def plot_accuracy_coverage(summary_rows, path):
    labels = _labels(summary_rows)
    acc = [r["mean_accuracy"] if r["mean_accuracy"] is not None else 0.0 for r in summary_rows]
    cov = [r["mean_coverage"] if r["mean_coverage"] is not None else 0.0 for r in summary_rows]
    x = range(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 1.2), 4))
    w = 0.38
    ax.bar([i - w / 2 for i in x], acc, w, label="accuracy")
    ax.bar([i + w / 2 for i in x], cov, w, label="coverage")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("fraction")
    ax.set_title("Off-chip prediction accuracy and coverage")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_speedup(summary_rows, path):
    rows = [r for r in summary_rows if r["geomean_speedup"] is not None]
    labels = _labels(rows)
    vals = [r["geomean_speedup"] for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 1.2), 4))
    ax.bar(range(len(labels)), vals, color="tab:green")
    ax.axhline(1.0, color="black", linewidth=0.8)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("geomean speedup vs baseline")
    ax.set_title("Performance relative to the no-speculation baseline")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_memory_overhead(summary_rows, path):
    rows = [r for r in summary_rows if r["mean_mm_overhead_pct"] is not None]
    labels = _labels(rows)
    vals = [r["mean_mm_overhead_pct"] for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 1.2), 4))
    ax.bar(range(len(labels)), vals, color="tab:orange")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("main-memory request overhead (%)")
    ax.set_title("Extra main-memory traffic vs baseline")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_report_figures(summary_rows, outdir):
    os.makedirs(outdir, exist_ok=True)
    written = []
    if summary_rows:
        written.append(
            plot_accuracy_coverage(summary_rows, os.path.join(outdir, "accuracy_coverage.png"))
        )
        written.append(plot_speedup(summary_rows, os.path.join(outdir, "speedup.png")))
        written.append(
            plot_memory_overhead(summary_rows, os.path.join(outdir, "memory_overhead.png"))
        )
    return written
