"""Cycle-accounting core model: in-order admission and retirement around a
finite reorder window, with prediction at load-queue allocation and
speculative memory requests issued for predicted off-chip loads.

The core is a retirement-window model, not a full out-of-order engine:
loads execute as soon as they are admitted and all performance effects come
from in-order retirement blocking on load completions inside a finite
window.  Admission flows at the retire width and stalls when the reorder
window, the load queue, or the L1 miss buffers are exhausted.  Non-memory
instructions (the per-record gap counts) occupy window slots and retire at
full width but never stall.

Ground truth must not depend on speculative-request timing, so one
simulation runs two clocks over the same functional hierarchy:

* the baseline clock drives the functional layer (tag state, prefetch
  arrival, metadata hooks) exactly as a run with speculation disabled
  would, making hit/miss labels and tag evolution identical across all
  predictors and issue latencies;
* the measured clock replays each functional outcome through its own
  timing overlay, where speculative requests race the cache walk to the
  memory controller.

With speculation off the two clocks coincide cycle for cycle.

Per load, in order: pending trainings whose data returned by now are
applied, the predictor sees the load at LQ allocation, a speculative
request is issued on a positive prediction once the address is generated
(one L1/TLB latency after allocation, plus the configured issue latency),
the hierarchy access resolves, and training is queued for the completion
cycle.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import replace

from .baselines import HmpPredictor, TtpPredictor
from .config import SimConfig
from .hierarchy import HERMES, L1, L2, LLC, PREFETCH, REGULAR, Hierarchy, TimingOverlay, line_of
from .metrics import SimMetrics
from .popet import (
    AlwaysPredictor,
    NeverPredictor,
    OraclePredictor,
    PopetPredictor,
)


def build_predictor(cfg: SimConfig, hierarchy: Hierarchy):
    kind = cfg.predictor
    if kind == "popet":
        return PopetPredictor(cfg.popet)
    if kind == "hmp":
        return HmpPredictor(cfg.hmp)
    if kind == "ttp":
        return TtpPredictor(cfg.ttp).register_with(hierarchy)
    if kind == "oracle":
        return OraclePredictor(lambda pc, vaddr: hierarchy.peek_off_chip(vaddr))
    if kind == "never":
        return NeverPredictor()
    if kind == "always":
        return AlwaysPredictor()
    raise ValueError(f"unknown predictor {kind!r}")


def ideal_hermes_mode(cfg: SimConfig) -> SimConfig:
    """Upper-bound datapath: perfect prediction, zero issue latency."""
    return replace(cfg, predictor="oracle", hermes="on", issue_latency=0)


class RetireLedger:
    """Slot-based admission/retirement bookkeeping for one clock.

    Slots advance one per instruction at ``width`` per cycle.  Retirement is
    strictly in order; a load whose data is not ready idles the retire
    cursor and the idle cycles are attributed to it.  Admission of a load
    waits for reorder-window space (the instruction ``rob_entries`` back
    must have retired), a load-queue slot (released when the load
    ``lq_entries`` back retires), and an L1 miss buffer.
    """

    def __init__(self, core_cfg, l1_mshrs):
        self.W = core_cfg.retire_width
        self.R = core_cfg.rob_entries
        self.LQ = core_cfg.lq_entries
        self.mshrs = l1_mshrs
        self.n_instr = 0
        self.admit_slot = -1
        self.retire_slot = -1
        self._segments = deque()  # (first_idx, first_slot, count), consecutive slots
        self._lq_release = deque()  # retire cycles of outstanding loads
        self._miss_heap = []  # completion cycles of loads holding L1 miss buffers
        self._load_admit_slot = -1
        self.blocked_cycles = 0
        self.stall_cycles_off_chip = 0
        self.retire_active_cycles = 0
        self.rob_empty_cycles = 0
        self._last_active_cycle = -1
        self.loads_retired = 0

    # -- helpers ---------------------------------------------------------------

    def _retire_slot_of(self, idx):
        while self._segments and self._segments[0][0] + self._segments[0][2] <= idx:
            self._segments.popleft()
        if not self._segments or idx < self._segments[0][0]:
            return -1  # retired long ago; no constraint survives
        first_idx, first_slot, _ = self._segments[0]
        return first_slot + (idx - first_idx)

    def _record(self, first_idx, first_slot, count):
        self._segments.append((first_idx, first_slot, count))

    def _span(self, first_slot, last_slot, blocked_for_load=None, off_chip=False):
        """Account retirement activity over consecutive slots and classify
        any idle whole cycles preceding it."""
        W = self.W
        start_c, end_c = first_slot // W, last_slot // W
        idle = start_c - self._last_active_cycle - 1
        if idle > 0:
            if blocked_for_load is not None:
                self.blocked_cycles += idle
                if off_chip:
                    self.stall_cycles_off_chip += idle
            else:
                self.rob_empty_cycles += idle
        if end_c > self._last_active_cycle:
            self.retire_active_cycles += end_c - max(self._last_active_cycle, start_c - 1)
            self._last_active_cycle = end_c
        return max(0, idle)

    # -- admission ---------------------------------------------------------------

    def admit_load(self, gap) -> int:
        """Admit ``gap`` non-memory instructions then one load; returns the
        load's admission cycle.  The gap batch retires in lockstep and never
        stalls."""
        W = self.W
        if gap:
            a_end = self.admit_slot + gap
            gate_idx = self.n_instr + gap - 1 - self.R
            if gate_idx >= 0:
                a_end = max(a_end, self._retire_slot_of(gate_idx) + 1)
            s_end = max(self.retire_slot + gap, a_end)
            self._record(self.n_instr, s_end - gap + 1, gap)
            self._span(s_end - gap + 1, s_end)
            self.admit_slot = a_end
            self.retire_slot = s_end
            self.n_instr += gap
        a = self.admit_slot + 1
        gate_idx = self.n_instr - self.R
        if gate_idx >= 0:
            a = max(a, self._retire_slot_of(gate_idx) + 1)
        if len(self._lq_release) >= self.LQ:
            a = max(a, self._lq_release.popleft() * W)
        # L1 miss buffers: wait until fewer than ``mshrs`` misses are
        # outstanding at the admission cycle
        while True:
            cyc = a // W
            while self._miss_heap and self._miss_heap[0] <= cyc:
                heapq.heappop(self._miss_heap)  # completed, no longer held
            if len(self._miss_heap) < self.mshrs:
                break
            a = max(a, heapq.heappop(self._miss_heap) * W)
        self.admit_slot = a
        self.n_instr += 1
        self._load_admit_slot = a
        return a // W

    # -- retirement ----------------------------------------------------------------

    def note_load(self, completion_cycle, off_chip, l1_miss) -> int:
        """Retire the load admitted by the last admit_load call; returns the
        whole cycles retirement idled waiting for its data."""
        W = self.W
        turn_slot = self.retire_slot + 1
        turn_cycle = turn_slot // W
        actual_cycle = max(turn_cycle, completion_cycle)
        s = max(turn_slot, actual_cycle * W, self._load_admit_slot)
        idle = self._span(s, s, blocked_for_load=True, off_chip=off_chip)
        self._record(self.n_instr - 1, s, 1)
        self.retire_slot = s
        retire_cycle = s // W
        self._lq_release.append(retire_cycle)
        if l1_miss:
            heapq.heappush(self._miss_heap, completion_cycle)
        self.loads_retired += 1
        return idle

    # -- totals ---------------------------------------------------------------------

    @property
    def total_cycles(self):
        return (self.retire_slot // self.W) + 1 if self.n_instr else 0


_COUNTER_FIELDS = (
    "total_cycles",
    "instructions_retired",
    "loads",
    "off_chip_loads",
    "tp",
    "fp",
    "fn",
    "tn",
    "l1_hits",
    "l2_hits",
    "llc_hits",
    "hermes_issued",
    "hermes_coalesced",
    "hermes_matched",
    "hermes_dropped",
    "hermes_unmatched",
    "mm_regular",
    "mm_hermes",
    "mm_prefetch",
    "prefetch_dropped",
    "stall_cycles_off_chip",
    "blocked_cycles",
    "retire_active_cycles",
    "rob_empty_cycles",
)


def simulate(records, cfg: SimConfig, trace_name="", event_log=None, warmup=0,
             instrument=None) -> SimMetrics:
    """Run one trace through the core model; returns populated metrics.

    The first ``warmup`` loads run normally (filling caches and training the
    predictor) but are excluded from every reported counter, so measurement
    can start from a warm state.  ``event_log``, when given a list, receives
    one dict per measured load with the prediction, ground truth, and
    measured-clock admission/completion, for independent replay checks.
    ``instrument``, when given, is called once with the hierarchy before the
    run so tests can attach listeners.
    """
    cfg.check()
    hier = Hierarchy(cfg.hierarchy)
    if instrument is not None:
        instrument(hier)
    hermes_active = cfg.hermes in ("on", "ideal")
    if cfg.hermes == "ideal":
        issue_latency = 0
        predictor = OraclePredictor(lambda pc, vaddr: hier.peek_off_chip(vaddr))
    else:
        issue_latency = cfg.issue_latency
        predictor = build_predictor(cfg, hier)
    mshrs = cfg.hierarchy.l1.mshrs
    base = RetireLedger(cfg.core, mshrs)
    perf = RetireLedger(cfg.core, mshrs)
    overlay = TimingOverlay(cfg.hierarchy)
    lat1 = cfg.hierarchy.l1.latency

    m = SimMetrics(
        trace=trace_name,
        predictor=predictor.name,
        hermes=cfg.hermes,
        issue_latency=issue_latency if hermes_active else 0,
    )
    pending_train = deque()  # (perf completion cycle, token, went_off_chip)

    def counters():
        mm = {
            "total_cycles": perf.total_cycles,
            "instructions_retired": perf.n_instr,
            "hermes_coalesced": overlay.rq.hermes_coalesced,
            "hermes_matched": overlay.rq.hermes_matched,
            "hermes_dropped": overlay.rq.dropped_hermes,
            "hermes_unmatched": overlay.rq.hermes_unmatched,
            "mm_regular": overlay.rq.requests[REGULAR],
            "mm_hermes": overlay.rq.requests[HERMES],
            "mm_prefetch": overlay.rq.requests[PREFETCH],
            "prefetch_dropped": hier.rq.dropped_prefetch,
            "l1_hits": hier.hits[L1],
            "l2_hits": hier.hits[L2],
            "llc_hits": hier.hits[LLC],
            "stall_cycles_off_chip": perf.stall_cycles_off_chip,
            "blocked_cycles": perf.blocked_cycles,
            "retire_active_cycles": perf.retire_active_cycles,
            "rob_empty_cycles": perf.rob_empty_cycles,
        }
        for name in ("loads", "off_chip_loads", "tp", "fp", "fn", "tn",
                     "hermes_issued"):
            mm[name] = getattr(m, name)
        return mm

    start = None

    for index, rec in enumerate(records):
        if index == warmup and warmup:
            start = counters()
        a_b = base.admit_load(rec.gap)
        hier.advance_to(a_b)
        a_p = perf.admit_load(rec.gap)
        while pending_train and pending_train[0][0] <= a_p:
            _, token, outcome = pending_train.popleft()
            predictor.train_load(token, outcome)

        prediction, token = predictor.predict_load(rec.pc, rec.vaddr, rec.gap)
        line = line_of(rec.vaddr)
        hreq = None
        if hermes_active and prediction:
            m.hermes_issued += 1
            # the request is generated once the address is known, one
            # L1/TLB latency after LQ allocation
            hreq = overlay.issue_hermes(line, a_p + lat1, issue_latency)

        res = hier.access(rec.vaddr, a_b)  # functional truth + baseline clock
        c_b = res.completion_cycle
        for pf_line in hier.last_prefetch_lines:
            overlay.mirror_prefetch(pf_line, a_p)
        c_p, _served = overlay.resolve(res.hit_level, line, a_p, hreq)
        if hreq is not None and not hreq.matched and hreq.kind == HERMES:
            overlay.retire_hermes(hreq, max(hreq.ready_cycle, c_p))

        base.note_load(c_b, res.off_chip, res.hit_level != L1)
        perf.note_load(c_p, res.off_chip, res.hit_level != L1)

        m.loads += 1
        if res.off_chip:
            m.off_chip_loads += 1
            if prediction:
                m.tp += 1
            else:
                m.fn += 1
        else:
            if prediction:
                m.fp += 1
            else:
                m.tn += 1
        pending_train.append((c_p, token, res.off_chip))
        if event_log is not None and index >= warmup:
            event_log.append(
                {
                    "index": index,
                    "pc": rec.pc,
                    "vaddr": rec.vaddr,
                    "gap": rec.gap,
                    "predicted": prediction,
                    "off_chip": res.off_chip,
                    "hit_level": res.hit_level,
                    "admit_cycle": a_p,
                    "completion_cycle": c_p,
                    "baseline_admit_cycle": a_b,
                    "baseline_completion_cycle": c_b,
                }
            )

    while pending_train:
        _, token, outcome = pending_train.popleft()
        predictor.train_load(token, outcome)

    end = counters()
    if warmup and start is None:
        start = dict(end)  # whole trace consumed by warmup
    if start is not None:
        for name in _COUNTER_FIELDS:
            setattr(m, name, end[name] - start[name])
    else:
        for name in _COUNTER_FIELDS:
            setattr(m, name, end[name])
    m._baseline_total_cycles = base.total_cycles
    m._predictor = predictor
    return m.validate()
