"""Offline design-time tooling: automated feature selection and threshold
grid search.

Feature selection is a beam search over the sixteen-feature candidate
catalog.  Iteration one scores every single feature by prediction accuracy
on the test traces; each following iteration crosses the best ``beam_width``
sets with every candidate (never duplicating a feature inside a set) and
keeps the best again, until the best accuracy improves by less than the
stopping epsilon or sets reach six features.  Selection replays traces with
the speculative datapath disabled (prediction and training only), which is
much cheaper than full timing simulation and measures exactly what the
search optimizes: accuracy.

Threshold tuning is a three-stage grid search per parameter, the other two
held fixed: sample the legal range [-80, 75] at a grid step of 5, keep the
ten values with the best geometric-mean speedup on the first ten traces,
then rerun those ten values on every trace and return the winner, ties
broken toward the value closest to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .config import PopetConfig, SimConfig
from .core import simulate
from .hierarchy import Hierarchy
from .metrics import geomean, speedup
from .popet import CANDIDATE_FEATURES, PopetPredictor

GRID_MIN, GRID_MAX, GRID_STEP = -80, 75, 5
TUNABLE_PARAMS = ("tau_act", "t_n", "t_p")

_REPLAY_WIDTH = 6  # frontend pace assumed for prediction-only replay


def replay(records, hier_cfg, predictor):
    """Prediction-only replay: drive the functional hierarchy, train the
    predictor in program order, count the confusion matrix.  No retirement
    ledger runs, so this is the cheap path for accuracy measurements."""
    hier = Hierarchy(hier_cfg)
    if hasattr(predictor, "register_with"):
        predictor.register_with(hier)
    n_instr = 0
    tp = fp = fn = tn = 0
    for rec in records:
        n_instr += rec.gap + 1
        cycle = n_instr // _REPLAY_WIDTH
        hier.advance_to(cycle)
        pred, token = predictor.predict_load(rec.pc, rec.vaddr, rec.gap)
        res = hier.access(rec.vaddr, cycle)
        predictor.train_load(token, res.off_chip)
        if res.off_chip:
            if pred:
                tp += 1
            else:
                fn += 1
        else:
            if pred:
                fp += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def replay_accuracy(records, hier_cfg, popet_cfg: PopetConfig) -> float:
    """Accuracy of a fresh predictor over one trace; 0.0 when it never
    fires (an unusable configuration ranks last)."""
    tp, fp, _, _ = replay(records, hier_cfg, PopetPredictor(popet_cfg))
    return tp / (tp + fp) if tp + fp else 0.0


def evaluate_feature_set(features, traces, hier_cfg, popet_cfg=None) -> float:
    cfg = replace(popet_cfg or PopetConfig(), features=tuple(features))
    scores = [replay_accuracy(t, hier_cfg, cfg) for t in traces]
    return sum(scores) / len(scores)


@dataclass
class SelectionResult:
    features: tuple
    accuracy: float
    rows: list  # (iteration, features, accuracy) per evaluated set


def select_features(
    test_traces,
    hier_cfg,
    beam_width=10,
    accuracy_epsilon=0.03,
    max_set_size=6,
    popet_cfg=None,
) -> SelectionResult:
    """Beam search over the candidate catalog; returns the best set found."""
    if not test_traces:
        raise ValueError("feature selection needs at least one test trace")
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    traces = [list(t) for t in test_traces]
    names = list(CANDIDATE_FEATURES)
    rows = []
    evaluated = {}

    def score(feats):
        key = frozenset(feats)
        if key not in evaluated:
            evaluated[key] = evaluate_feature_set(feats, traces, hier_cfg, popet_cfg)
        return evaluated[key]

    beam = []
    best_set, best_acc = (), -1.0
    prev_iter_best = None
    iteration = 1
    candidates = [(f,) for f in names]
    while candidates:
        scored = []
        seen = set()
        for feats in candidates:
            key = frozenset(feats)
            if key in seen:
                continue
            seen.add(key)
            acc = score(feats)
            scored.append((acc, feats))
            rows.append((iteration, feats, acc))
        scored.sort(key=lambda t: (-t[0], t[1]))
        beam = [feats for _, feats in scored[:beam_width]]
        iter_best = scored[0][0]
        if iter_best > best_acc:
            best_acc, best_set = iter_best, scored[0][1]
        if prev_iter_best is not None and iter_best - prev_iter_best < accuracy_epsilon:
            break
        prev_iter_best = iter_best
        if len(beam[0]) >= max_set_size:
            break
        candidates = [
            feats + (f,)
            for feats in beam
            for f in names
            if f not in feats and frozenset(feats + (f,)) not in evaluated
        ]
        iteration += 1
    return SelectionResult(best_set, best_acc, rows)


@dataclass
class TuneResult:
    param: str
    value: int
    rows: list  # (stage, value, geomean_speedup) per evaluation


def _with_param(cfg: SimConfig, param, value):
    popet = replace(cfg.popet, **{param: value})
    thresholds_ok = popet.t_n < popet.tau_act < popet.t_p
    return replace(cfg, popet=popet), thresholds_ok


def default_runner(cfg, records):
    return simulate(records, cfg)


def tune_thresholds(traces, param, base_cfg: SimConfig | None = None, runner=None) -> TuneResult:
    """Three-stage grid search for one threshold, the other two held at the
    base configuration's values.  Grid values that break the threshold
    ordering invariant are skipped."""
    if param not in TUNABLE_PARAMS:
        raise ValueError(f"param must be one of {TUNABLE_PARAMS}")
    if not traces:
        raise ValueError("threshold tuning needs at least one trace")
    traces = [list(t) for t in traces]
    runner = runner or default_runner
    base_cfg = base_cfg or SimConfig(predictor="popet", hermes="on")
    if base_cfg.hermes == "off":
        base_cfg = replace(base_cfg, hermes="on")
    off_cfg = replace(base_cfg, hermes="off")

    rows = []
    baselines = {}

    def gmean_speedup(value, trace_subset):
        cfg, ok = _with_param(base_cfg, param, value)
        if not ok:
            return None
        sp = []
        for i, t in enumerate(trace_subset):
            if i not in baselines:
                baselines[i] = runner(off_cfg, t)
            sp.append(speedup(runner(cfg, t), baselines[i]))
        return geomean(sp)

    grid = list(range(GRID_MIN, GRID_MAX + 1, GRID_STEP))
    test = traces[: min(10, len(traces))]
    stage2 = []
    for v in grid:
        g = gmean_speedup(v, test)
        rows.append((2, v, g))
        if g is not None:
            stage2.append((v, g))
    # top-10 by speedup; ties resolve toward the value closest to zero
    stage2.sort(key=lambda t: (-t[1], abs(t[0]), t[0]))
    finalists = [v for v, _ in stage2[:10]]

    baselines.clear()
    best_value, best_g = None, None
    for v in sorted(finalists, key=lambda x: (abs(x), x)):
        g = gmean_speedup(v, traces)
        rows.append((3, v, g))
        if g is not None and (best_g is None or g > best_g):
            best_value, best_g = v, g
    return TuneResult(param, best_value, rows)
