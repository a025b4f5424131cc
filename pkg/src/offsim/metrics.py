"""Evaluation metrics and their CSV serialization.

Prediction quality is scored from the per-load confusion counters:
accuracy = TP/(TP+FP) over positive predictions, coverage = TP/(TP+FN)
over loads that actually went off-chip; both are reported as absent (None,
empty CSV cell) when their denominator is zero rather than as 0.  Speedup
between two runs of the same trace is the IPC ratio, and main-memory
overhead is the percentage increase in DRAM requests over a baseline run.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

SCHEMA_VERSION = 1


class MetricsError(ValueError):
    pass


@dataclass
class SimMetrics:
    """Counter bundle produced by one simulation run."""

    trace: str = ""
    predictor: str = ""
    hermes: str = "off"
    issue_latency: int = 0

    total_cycles: int = 0
    instructions_retired: int = 0
    loads: int = 0
    off_chip_loads: int = 0

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    l1_hits: int = 0
    l2_hits: int = 0
    llc_hits: int = 0

    hermes_issued: int = 0
    hermes_coalesced: int = 0
    hermes_matched: int = 0
    hermes_dropped: int = 0
    hermes_unmatched: int = 0

    mm_regular: int = 0
    mm_hermes: int = 0
    mm_prefetch: int = 0
    prefetch_dropped: int = 0

    stall_cycles_off_chip: int = 0
    blocked_cycles: int = 0
    retire_active_cycles: int = 0
    rob_empty_cycles: int = 0

    schema_version: int = SCHEMA_VERSION

    @property
    def mm_total(self):
        return self.mm_regular + self.mm_hermes + self.mm_prefetch

    @property
    def ipc(self):
        return self.instructions_retired / self.total_cycles if self.total_cycles else 0.0

    def validate(self):
        if self.tp + self.fn != self.off_chip_loads:
            raise MetricsError("tp+fn must equal off_chip_loads")
        if self.tp + self.fp + self.fn + self.tn != self.loads:
            raise MetricsError("confusion matrix must partition the loads")
        if self.hermes_matched > self.hermes_issued:
            raise MetricsError("hermes_matched cannot exceed hermes_issued")
        return self


def accuracy(m: SimMetrics):
    """TP over positive predictions; None when nothing was predicted."""
    denom = m.tp + m.fp
    return m.tp / denom if denom else None


def coverage(m: SimMetrics):
    """TP over true off-chip loads; None when nothing went off-chip."""
    denom = m.tp + m.fn
    return m.tp / denom if denom else None


def speedup(m_x: SimMetrics, m_baseline: SimMetrics):
    """IPC ratio of a run over its baseline on the same trace."""
    if m_x.instructions_retired != m_baseline.instructions_retired:
        raise MetricsError(
            "speedup requires matching instruction counts "
            f"({m_x.instructions_retired} vs {m_baseline.instructions_retired})"
        )
    if m_x.total_cycles == 0 or m_baseline.total_cycles == 0:
        return 1.0
    return m_baseline.total_cycles / m_x.total_cycles


def memory_overhead(m_x: SimMetrics, m_baseline: SimMetrics):
    """Percentage increase in main-memory requests over the baseline;
    None when the baseline issued none."""
    base = m_baseline.mm_total
    if base == 0:
        return None
    return (m_x.mm_total - base) / base * 100.0


_COUNTER_FIELDS = [f.name for f in fields(SimMetrics)]
REPORT_COLUMNS = _COUNTER_FIELDS + ["accuracy", "coverage"]


def write_report(metrics_list, path):
    """One CSV row per run, stable documented column order, header always."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for m in metrics_list:
            row = [getattr(m, name) for name in _COUNTER_FIELDS]
            acc, cov = accuracy(m), coverage(m)
            row.append("" if acc is None else repr(acc))
            row.append("" if cov is None else repr(cov))
            w.writerow(row)


def read_report(path):
    """Parse rows written by write_report back into SimMetrics."""
    out = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[: len(_COUNTER_FIELDS)] != _COUNTER_FIELDS:
            raise MetricsError(f"unexpected report header in {path}")
        for row in r:
            kw = {}
            for name, value in zip(_COUNTER_FIELDS, row):
                if name in ("trace", "predictor", "hermes"):
                    kw[name] = value
                else:
                    kw[name] = int(value)
            out.append(SimMetrics(**kw))
    return out


def geomean(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return math.exp(sum(math.log(v) for v in vals) / len(vals))


def mean(values):
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def summarize(rows):
    """Aggregate many runs into per-configuration summary dicts.

    Rates average arithmetically; speedups over the matching hermes-off
    baseline rows combine geometrically.  Rows whose trace has no baseline
    run simply contribute no speedup sample.
    """
    baselines = {}
    for m in rows:
        if m.hermes == "off" and m.trace not in baselines:
            baselines[m.trace] = m
    groups = {}
    for m in rows:
        groups.setdefault((m.predictor, m.hermes, m.issue_latency), []).append(m)
    summary = []
    for (pred, hermes, lat), members in sorted(groups.items()):
        speedups, overheads = [], []
        for m in members:
            base = baselines.get(m.trace)
            if base is not None and base is not m:
                speedups.append(speedup(m, base))
                overheads.append(memory_overhead(m, base))
            elif base is m:
                speedups.append(1.0)
                overheads.append(0.0)
        summary.append(
            {
                "predictor": pred,
                "hermes": hermes,
                "issue_latency": lat,
                "runs": len(members),
                "mean_accuracy": mean(accuracy(m) for m in members),
                "mean_coverage": mean(coverage(m) for m in members),
                "geomean_speedup": geomean(speedups),
                "mean_mm_overhead_pct": mean(overheads),
                "mean_stall_cycles_off_chip": mean(
                    m.stall_cycles_off_chip for m in members
                ),
            }
        )
    return summary


def write_summary(summary_rows, path):
    cols = [
        "predictor",
        "hermes",
        "issue_latency",
        "runs",
        "mean_accuracy",
        "mean_coverage",
        "geomean_speedup",
        "mean_mm_overhead_pct",
        "mean_stall_cycles_off_chip",
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in summary_rows:
            w.writerow(["" if row[c] is None else row[c] for c in cols])
