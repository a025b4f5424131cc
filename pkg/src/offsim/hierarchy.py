"""Three-level cache hierarchy, main-memory read queue, and prefetchers.

The model is functional-first: tag arrays evolve purely with the demand
access sequence (LRU, inclusive, fill-on-miss, back-invalidate on LLC
eviction), while completion cycles are computed per access from the
configured round-trip latencies.  Speculative off-chip requests never touch
the tag arrays: an unclaimed one is dropped when it retires, so enabling
them cannot pollute or clean any cache level.

Timing rules for a demand access at cycle t (latencies accumulate down the
walk):

    L1 hit          t + lat(L1)
    L2 hit          t + lat(L1) + lat(L2)
    LLC hit         t + lat(L1) + lat(L2) + lat(LLC)
    off-chip        max(walk to LLC miss, data_ready)

where data_ready comes from the read-queue entry serving the line: a fresh
regular fetch starts at the LLC-miss cycle, while an in-flight speculative
or prefetch entry to the same line is joined instead of duplicated, which is
what lets an early speculative request hide the post-L1 walk.

Lines whose data is still in flight are tracked so that later same-line
accesses (MSHR-style merges) cannot complete before the data lands; such
merged accesses count as on-chip hits because they never reach the memory
controller themselves.

The timing machinery is packaged as a TimingOverlay so a driver can run a
second clock (e.g. with speculative requests enabled) against the same
functional tag state without perturbing it.
"""

from __future__ import annotations

import heapq
from collections import OrderedDict
from dataclasses import dataclass

from .config import LINE_BYTES, HierarchyConfig

REGULAR = "regular"
HERMES = "hermes"
PREFETCH = "prefetch"

L1, L2, LLC, OFF_CHIP = "L1", "L2", "LLC", "OffChip"

_NEVER = 1 << 62  # release sentinel for entries that wait to be claimed


def line_of(addr):
    return addr & ~(LINE_BYTES - 1)


class CacheLevel:
    """Set-associative tag array with true-LRU replacement."""

    def __init__(self, name, cfg):
        self.name = name
        self.cfg = cfg
        self.n_sets = cfg.n_sets
        self.ways = cfg.ways
        self.sets = [OrderedDict() for _ in range(self.n_sets)]
        self.fills = 0
        self.evictions = 0

    def _set(self, line):
        return self.sets[(line >> 6) % self.n_sets]

    def lookup(self, line, touch=True) -> bool:
        if line % LINE_BYTES:
            raise ValueError("line address must be 64-byte aligned")
        s = self._set(line)
        if line in s:
            if touch:
                s.move_to_end(line)
            return True
        return False

    def fill(self, line):
        """Insert a line; returns the evicted line or None."""
        s = self._set(line)
        if line in s:
            s.move_to_end(line)
            return None
        s[line] = None
        self.fills += 1
        if len(s) > self.ways:
            victim, _ = s.popitem(last=False)
            self.evictions += 1
            return victim
        return None

    def invalidate(self, line) -> bool:
        s = self._set(line)
        if line in s:
            del s[line]
            return True
        return False

    def tag_state(self):
        """Canonical snapshot of tags including recency order."""
        return tuple(tuple(s.keys()) for s in self.sets)


@dataclass
class MemoryRequest:
    """One main-memory read-queue entry (or a handle coalesced onto one)."""

    line: int
    kind: str
    issue_cycle: int
    entry_cycle: int
    ready_cycle: int
    release_cycle: int
    matched: bool = False
    retired: bool = False

    def __post_init__(self):
        if self.ready_cycle < self.issue_cycle:
            raise ValueError("ready_cycle must be >= issue_cycle")


class ReadQueue:
    """Memory-controller read queue with per-line coalescing.

    Overflow drops speculative and prefetch requests, never regular demand
    fetches.  Each created entry performs exactly one DRAM access, counted
    by kind.
    """

    def __init__(self, size, dram_latency, queue_penalty=0):
        self.size = size
        self.dram_latency = dram_latency
        self.queue_penalty = queue_penalty
        self.live = {}  # line -> MemoryRequest
        self.requests = {REGULAR: 0, HERMES: 0, PREFETCH: 0}
        self.dropped_hermes = 0
        self.dropped_prefetch = 0
        self.hermes_coalesced = 0
        self.hermes_matched = 0
        self.prefetch_matched = 0
        self.hermes_unmatched = 0

    def purge(self, now):
        dead = [ln for ln, e in self.live.items() if e.release_cycle <= now]
        for ln in dead:
            del self.live[ln]

    def get(self, line):
        return self.live.get(line)

    def add(self, line, kind, issue_cycle, entry_cycle):
        """Create an entry unless capacity forces a drop. Caller has already
        checked there is no live entry to coalesce onto."""
        self.purge(issue_cycle)
        if len(self.live) >= self.size:
            if kind == HERMES:
                self.dropped_hermes += 1
                return None
            if kind == PREFETCH:
                self.dropped_prefetch += 1
                return None
            # regular demand fetches are never dropped
        ready = entry_cycle + self.dram_latency + self.queue_penalty * len(self.live)
        # A speculative entry holds its data until explicitly claimed or
        # retired, so its release is unknown at creation time.
        release = _NEVER if kind == HERMES else ready
        req = MemoryRequest(line, kind, issue_cycle, entry_cycle, ready, release)
        self.live[line] = req
        self.requests[kind] += 1
        return req


@dataclass(frozen=True)
class AccessResult:
    hit_level: str  # L1 / L2 / LLC / OffChip
    completion_cycle: int
    off_chip: bool
    line: int
    served_by: str = ""  # for off-chip: regular / hermes / prefetch


class TimingOverlay:
    """Completion-cycle arithmetic for one clock: a read queue plus the
    in-flight data-arrival map used for same-line merge waits.

    The functional walk outcome is an input; the overlay decides when the
    data is usable on its own clock, so two overlays (with and without
    speculative requests) can replay one functional truth."""

    def __init__(self, cfg: HierarchyConfig):
        self.cfg = cfg
        self.rq = ReadQueue(cfg.rq_size, cfg.dram_latency, cfg.queue_penalty)
        self.lat = {
            L1: cfg.l1.latency,
            L2: cfg.l1.latency + cfg.l2.latency,
            LLC: cfg.l1.latency + cfg.l2.latency + cfg.llc.latency,
        }
        self.lat[OFF_CHIP] = self.lat[LLC]
        self._inflight = {}  # line -> cycle its data lands in the caches

    def issue_hermes(self, line, cycle, issue_latency):
        """Speculative read straight to the controller; enters the queue
        after the issue latency, never touches the caches.  Returns the live
        entry it coalesced onto, None on a capacity drop, else the new
        request."""
        if line % LINE_BYTES:
            raise ValueError("line address must be 64-byte aligned")
        self.rq.purge(cycle)
        existing = self.rq.get(line)
        if existing is not None:
            self.rq.hermes_coalesced += 1
            return existing
        return self.rq.add(line, HERMES, cycle, cycle + issue_latency)

    def retire_hermes(self, request: MemoryRequest, cycle):
        """Finish a speculative request: matched entries were already handed
        to the waiting demand fetch; unclaimed ones are dropped without any
        cache mutation."""
        if cycle < request.ready_cycle:
            raise ValueError("cannot retire a request before its data is ready")
        if request.retired:
            raise ValueError("request already retired")
        request.retired = True
        if request.release_cycle == _NEVER:
            request.release_cycle = cycle
        if not request.matched:
            if request.kind == HERMES:
                self.rq.hermes_unmatched += 1
            if self.rq.get(request.line) is request:
                del self.rq.live[request.line]

    def mirror_prefetch(self, line, cycle):
        """Account a prefetch decided by the functional layer on this clock;
        coalesces onto any live entry."""
        if self.rq.get(line) is None:
            return self.rq.add(line, PREFETCH, cycle, cycle)
        return None

    def resolve(self, hit_level, line, cycle, hermes_request=None):
        """Completion cycle for one access outcome on this clock.

        Off-chip: join a live speculative/prefetch entry for the line or
        start a fresh regular fetch from the LLC-miss point; data is usable
        no earlier than the walk reaches the controller.  On-chip: the walk
        latency, floored by any in-flight fill of the same line."""
        self.rq.purge(cycle)
        if hit_level != OFF_CHIP:
            completion = cycle + self.lat[hit_level]
            pending = self._inflight.get(line)
            if pending is not None:
                if pending > completion:
                    completion = pending  # merge: wait for the landing data
                else:
                    del self._inflight[line]
            if hit_level != L1:
                self._inflight[line] = completion
            return completion, ""

        llc_at = cycle + self.lat[LLC]
        serving = None
        if (
            hermes_request is not None
            and not hermes_request.retired
            and hermes_request.line == line
            and self.rq.get(line) is hermes_request
        ):
            serving = hermes_request
        else:
            entry = self.rq.get(line)
            # Speculative and prefetch entries in flight are joined; a stale
            # regular entry (its line was evicted mid-flight) is refetched.
            if entry is not None and not entry.retired and entry.kind != REGULAR:
                serving = entry
        if serving is not None:
            ready = serving.ready_cycle
            serving.matched = True
            if serving.kind == HERMES:
                self.rq.hermes_matched += 1
            elif serving.kind == PREFETCH:
                self.rq.prefetch_matched += 1
            served_by = serving.kind
        else:
            serving = self.rq.add(line, REGULAR, cycle, llc_at)
            ready = serving.ready_cycle
            served_by = REGULAR
        completion = max(llc_at, ready)
        if serving.release_cycle == _NEVER:
            serving.release_cycle = completion
        else:
            serving.release_cycle = max(serving.release_cycle, completion)
        self._inflight[line] = completion
        return completion, served_by


class StrideDetector:
    """Tracks the last global access stride; confirmed after one repeat."""

    def __init__(self):
        self.last_addr = None
        self.stride = 0
        self.confirmed = False

    def step(self, addr):
        if self.last_addr is None:
            self.last_addr = addr
            return 0
        s = addr - self.last_addr
        self.confirmed = s != 0 and s == self.stride
        self.stride = s
        self.last_addr = addr
        return s if self.confirmed else 0


class Hierarchy:
    """L1/L2/LLC plus read queue; ground-truth source for off-chip labels."""

    def __init__(self, cfg: HierarchyConfig):
        cfg.check()
        self.cfg = cfg
        self.l1 = CacheLevel(L1, cfg.l1)
        self.l2 = CacheLevel(L2, cfg.l2)
        self.llc = CacheLevel(LLC, cfg.llc)
        self.timing = TimingOverlay(cfg)
        self.rq = self.timing.rq
        self.lat1 = self.timing.lat[L1]
        self.lat2 = self.timing.lat[L2]
        self.lat3 = self.timing.lat[LLC]
        self._pending_prefetch = []  # heap of (ready, seq, line)
        self._hooks = []             # heap of (due, seq, kind, line)
        self._seq = 0
        self._stride = StrideDetector()
        self._clock = 0
        self.fill_listeners = []   # called (line, cycle) when a line joins the LLC
        self.evict_listeners = []  # called (line, cycle) when a line leaves the LLC
        self.off_chip_accesses = 0
        self.hits = {L1: 0, L2: 0, LLC: 0}
        self.prefetch_issued = 0
        self.last_prefetch_lines = []

    # -- event plumbing ------------------------------------------------------

    def _queue_hook(self, kind, line, due):
        heapq.heappush(self._hooks, (due, self._seq, kind, line))
        self._seq += 1

    def advance_to(self, cycle):
        """Apply prefetch fills and membership hooks due by ``cycle``.

        Hooks fire at data-arrival time so metadata mirrors (tag trackers)
        see fills only once the line has physically landed.
        """
        while self._pending_prefetch and self._pending_prefetch[0][0] <= cycle:
            ready, _, line = heapq.heappop(self._pending_prefetch)
            entry = self.rq.get(line)
            if entry is not None and entry.kind == PREFETCH:
                self.rq.live.pop(line, None)
            if self.llc.lookup(line, touch=False):
                self.llc.lookup(line)  # refresh recency, already present
                continue
            victim = self.llc.fill(line)
            if victim is not None:
                self._back_invalidate(victim, ready)
            self._queue_hook("fill", line, ready)
        while self._hooks and self._hooks[0][0] <= cycle:
            due, _, kind, line = heapq.heappop(self._hooks)
            listeners = self.fill_listeners if kind == "fill" else self.evict_listeners
            for cb in listeners:
                cb(line, due)

    def _back_invalidate(self, victim, cycle):
        # Strict inclusion: a line leaving the LLC leaves the hierarchy.
        self.l1.invalidate(victim)
        self.l2.invalidate(victim)
        self._queue_hook("evict", victim, cycle)

    # -- spec surface ----------------------------------------------------------

    def lookup(self, level: CacheLevel, line_addr) -> bool:
        return level.lookup(line_addr)

    def peek_off_chip(self, vaddr) -> bool:
        """Would a load to vaddr miss the whole hierarchy right now?
        Pure: no recency updates, no fills."""
        line = line_of(vaddr)
        return not (
            self.l1.lookup(line, touch=False)
            or self.l2.lookup(line, touch=False)
            or self.llc.lookup(line, touch=False)
        )

    def issue_hermes(self, line_addr, cycle, issue_latency):
        return self.timing.issue_hermes(line_addr, cycle, issue_latency)

    def retire_hermes(self, request, cycle):
        self.timing.retire_hermes(request, cycle)

    def walk(self, vaddr) -> str:
        """Functional walk: where does the line currently reside?  Mutates
        recency and fills upper levels on lower-level hits."""
        line = line_of(vaddr)
        if self.l1.lookup(line):
            return L1
        if self.l2.lookup(line):
            self.l1.fill(line)
            return L2
        if self.llc.lookup(line):
            self.l2.fill(line)
            self.l1.fill(line)
            return LLC
        return OFF_CHIP

    def admit_fill(self, line, landing_cycle):
        """Fill all levels for an off-chip demand access (the regular path),
        queueing membership hooks for the landing time."""
        victim = self.llc.fill(line)
        if victim is not None:
            self._back_invalidate(victim, landing_cycle)
        self.l2.fill(line)
        self.l1.fill(line)
        self._queue_hook("fill", line, landing_cycle)

    def access(self, vaddr, cycle, hermes_request: MemoryRequest | None = None):
        """Demand load walk; the only path that fills caches.

        On an LLC miss the load reaches the memory controller: if a live
        read-queue entry covers the line (a speculative request or prefetch
        in flight) the load waits on that entry, otherwise it starts a fresh
        regular fetch from the miss point.
        """
        if cycle < self._clock:
            raise ValueError("access cycles must be non-decreasing")
        self._clock = cycle
        self.advance_to(cycle)
        line = line_of(vaddr)
        level = self.walk(vaddr)
        completion, served_by = self.timing.resolve(level, line, cycle, hermes_request)
        if level == OFF_CHIP:
            self.off_chip_accesses += 1
            self.admit_fill(line, completion)
            result = AccessResult(OFF_CHIP, completion, True, line, served_by)
        else:
            self.hits[level] += 1
            result = AccessResult(level, completion, False, line)
        self.prefetcher_step(vaddr, result)
        return result

    # -- prefetch ----------------------------------------------------------------

    def prefetcher_step(self, vaddr, result: AccessResult):
        """Emit prefetches for one demand access; fills land in the LLC one
        memory latency later and shift future off-chip ground truth."""
        mode = self.cfg.prefetcher
        self.last_prefetch_lines = []
        if mode == "off":
            return []
        line = line_of(vaddr)
        candidates = []
        if mode == "next-line":
            candidates = [line + LINE_BYTES * i for i in range(1, self.cfg.prefetch_degree + 1)]
        elif mode == "stride":
            stride = self._stride.step(vaddr)
            if stride:
                candidates = [
                    line_of(vaddr + stride * i)
                    for i in range(1, self.cfg.prefetch_degree + 1)
                ]
        issued = []
        for cand in candidates:
            if cand == line or cand < 0:
                continue
            if self.llc.lookup(cand, touch=False):
                continue
            if self.rq.get(cand) is not None:
                continue
            req = self.rq.add(cand, PREFETCH, self._clock, self._clock)
            if req is None:
                continue
            heapq.heappush(self._pending_prefetch, (req.ready_cycle, self._seq, cand))
            self._seq += 1
            self.prefetch_issued += 1
            issued.append(req)
            self.last_prefetch_lines.append(cand)
        return issued

    # -- inspection ----------------------------------------------------------------

    def tag_state(self):
        return (self.l1.tag_state(), self.l2.tag_state(), self.llc.tag_state())

    def contents(self):
        """Set of lines resident anywhere in the hierarchy (== LLC under
        strict inclusion)."""
        return {ln for s in self.llc.sets for ln in s}
