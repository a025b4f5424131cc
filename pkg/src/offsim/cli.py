"""Command-line front end.

Subcommands:
  gen              write a synthetic trace (stream, chase, or mixed)
  run              simulate one trace and append a row to a metrics CSV
  report           aggregate metrics CSVs into a summary CSV plus figures
  select-features  offline beam search over the candidate feature catalog
  tune             offline grid search for one predictor threshold
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import metrics as met
from .config import (
    ConfigError,
    HERMES_MODES,
    PREDICTORS,
    SimConfig,
    load_config,
    save_config,
)
from .core import simulate
from .plots import render_report_figures
from .trace import (
    MixedComponent,
    TraceError,
    gen_mixed,
    gen_pointer_chase,
    gen_stream,
    read_trace,
    write_trace,
)
from .tuning import TUNABLE_PARAMS, select_features, tune_thresholds


def _add_gen(sub):
    p = sub.add_parser("gen", help="generate a synthetic load trace")
    p.add_argument("kind", choices=("stream", "chase", "mixed"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap", type=int, default=0, help="non-memory instructions between loads")
    p.add_argument("--passes", type=int, default=1)
    # stream parameters
    p.add_argument("--array-bytes", type=int, default=1 << 20)
    p.add_argument("--element-size", type=int, default=4)
    # chase parameters
    p.add_argument("--working-set-bytes", type=int, default=1 << 24)
    p.add_argument("--node-count", type=int, default=4096)
    # mixed parameters
    p.add_argument("--records", type=int, default=100_000)
    p.add_argument(
        "--component",
        action="append",
        default=[],
        metavar="KIND=WEIGHT",
        help="mixed only; repeatable, e.g. --component stream=0.5 --component chase=0.5",
    )


def _cmd_gen(args):
    if args.kind == "stream":
        records = gen_stream(args.array_bytes, args.element_size, args.passes, args.gap)
        label = f"stream array={args.array_bytes} elem={args.element_size} passes={args.passes}"
    elif args.kind == "chase":
        records = gen_pointer_chase(
            args.working_set_bytes, args.node_count, args.seed, args.gap, args.passes
        )
        label = (
            f"chase ws={args.working_set_bytes} nodes={args.node_count} seed={args.seed}"
        )
    else:
        if not args.component:
            raise ConfigError("mixed traces need at least one --component KIND=WEIGHT")
        comps = []
        for spec in args.component:
            kind, _, weight = spec.partition("=")
            if kind == "stream":
                params = {"array_bytes": args.array_bytes, "element_size": args.element_size}
            elif kind == "chase":
                params = {
                    "working_set_bytes": args.working_set_bytes,
                    "node_count": args.node_count,
                }
            else:
                raise ConfigError(f"unknown mixed component {kind!r}")
            comps.append(MixedComponent(kind, float(weight), dict(params, gap=args.gap)))
        records = gen_mixed(comps, args.records, args.seed)
        label = f"mixed {','.join(args.component)} seed={args.seed}"
    count = write_trace(args.out, records, generator=label)
    print(f"wrote {count} records to {args.out}")
    return 0


def _add_run(sub):
    p = sub.add_parser("run", help="simulate a trace and append metrics")
    p.add_argument("--trace", required=True)
    p.add_argument("--config", help="JSON simulation config; defaults are used otherwise")
    p.add_argument("--predictor", choices=PREDICTORS)
    p.add_argument("--hermes", choices=HERMES_MODES)
    p.add_argument("--issue-latency", type=int)
    p.add_argument("--warmup", type=int, default=0, help="loads excluded from metrics")
    p.add_argument("--out", required=True, help="metrics CSV (appended to if present)")
    p.add_argument("--dump-state", help="write trained predictor state blob here")


def _cmd_run(args):
    cfg = load_config(args.config) if args.config else SimConfig()
    overrides = {}
    if args.predictor:
        overrides["predictor"] = args.predictor
    if args.hermes:
        overrides["hermes"] = args.hermes
    if args.issue_latency is not None:
        overrides["issue_latency"] = args.issue_latency
    if overrides:
        cfg = replace(cfg, **overrides)
    cfg.check()
    records = read_trace(args.trace)
    name = os.path.basename(args.trace)
    m = simulate(records, cfg, trace_name=name, warmup=args.warmup)
    rows = met.read_report(args.out) if os.path.exists(args.out) else []
    rows.append(m)
    met.write_report(rows, args.out)
    acc, cov = met.accuracy(m), met.coverage(m)
    print(
        f"{name}: cycles={m.total_cycles} ipc={m.ipc:.3f} "
        f"off_chip={m.off_chip_loads}/{m.loads} "
        f"acc={'-' if acc is None else f'{acc:.3f}'} "
        f"cov={'-' if cov is None else f'{cov:.3f}'} "
        f"mm={m.mm_total}"
    )
    if args.dump_state:
        predictor = m._predictor
        if not hasattr(predictor, "dump_state"):
            raise ConfigError(f"predictor {cfg.predictor!r} has no serializable state")
        with open(args.dump_state, "wb") as fh:
            fh.write(predictor.dump_state())
    return 0


def _add_report(sub):
    p = sub.add_parser("report", help="aggregate metrics CSVs; render figures")
    p.add_argument("csvs", nargs="+", help="metrics CSV files from `run`")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")


def _cmd_report(args):
    rows = []
    for path in args.csvs:
        rows.extend(met.read_report(path))
    summary = met.summarize(rows)
    os.makedirs(args.out_dir, exist_ok=True)
    out_csv = os.path.join(args.out_dir, "summary.csv")
    met.write_summary(summary, out_csv)
    written = [out_csv]
    if not args.no_figures:
        written += render_report_figures(summary, args.out_dir)
    for r in summary:
        acc = r["mean_accuracy"]
        cov = r["mean_coverage"]
        sp = r["geomean_speedup"]
        print(
            f"{r['predictor']:>8} hermes={r['hermes']:<5} lat={r['issue_latency']:<2} "
            f"runs={r['runs']:<3} "
            f"acc={'-' if acc is None else f'{acc:.3f}'} "
            f"cov={'-' if cov is None else f'{cov:.3f}'} "
            f"speedup={'-' if sp is None else f'{sp:.3f}'}"
        )
    print("wrote " + ", ".join(written))
    return 0


def _add_select(sub):
    p = sub.add_parser("select-features", help="beam search for a feature set")
    p.add_argument("--trace", action="append", required=True, dest="traces")
    p.add_argument("--config", help="base JSON config (hierarchy + predictor params)")
    p.add_argument("--beam-width", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=0.03)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-config", help="write the winning config here")


def _cmd_select(args):
    cfg = load_config(args.config) if args.config else SimConfig()
    traces = [list(read_trace(t)) for t in args.traces]
    res = select_features(
        traces,
        cfg.hierarchy,
        beam_width=args.beam_width,
        accuracy_epsilon=args.epsilon,
        popet_cfg=cfg.popet,
    )
    import csv

    with open(args.out_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "features", "accuracy"])
        for it, feats, acc in res.rows:
            w.writerow([it, "+".join(feats), repr(acc)])
    print(f"selected: {'+'.join(res.features)} (accuracy {res.accuracy:.3f})")
    if args.out_config:
        save_config(replace(cfg, popet=replace(cfg.popet, features=res.features)), args.out_config)
    return 0


def _add_tune(sub):
    p = sub.add_parser("tune", help="grid search one predictor threshold")
    p.add_argument("--param", choices=TUNABLE_PARAMS, required=True)
    p.add_argument("--trace", action="append", required=True, dest="traces")
    p.add_argument("--config")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-config")


def _cmd_tune(args):
    cfg = load_config(args.config) if args.config else SimConfig(predictor="popet", hermes="on")
    traces = [list(read_trace(t)) for t in args.traces]
    res = tune_thresholds(traces, args.param, base_cfg=cfg)
    import csv

    with open(args.out_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "value", "geomean_speedup"])
        for stage, value, g in res.rows:
            w.writerow([stage, value, "" if g is None else repr(g)])
    print(f"{args.param} = {res.value}")
    if args.out_config:
        save_config(
            replace(cfg, popet=replace(cfg.popet, **{args.param: res.value})),
            args.out_config,
        )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="offsim",
        description="Trace-driven memory-hierarchy simulator with off-chip load prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen(sub)
    _add_run(sub)
    _add_report(sub)
    _add_select(sub)
    _add_tune(sub)
    args = parser.parse_args(argv)
    handlers = {
        "gen": _cmd_gen,
        "run": _cmd_run,
        "report": _cmd_report,
        "select-features": _cmd_select,
        "tune": _cmd_tune,
    }
    try:
        return handlers[args.command](args)
    except (TraceError, ConfigError, met.MetricsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
