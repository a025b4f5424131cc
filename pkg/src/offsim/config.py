"""Simulation configuration: cache geometry, core window, predictor choice.

Defaults model a large contemporary performance core: 48KB/1.25MB private
L1/L2 and a 3MB last-level cache with 5/15/55-cycle round-trip latencies, a
512-entry reorder window with a 128-entry load queue, and a fixed-latency
main memory.  The 110-cycle memory latency approximates row activate plus
column access plus a 64B burst on a DDR4-3200 channel for a 4 GHz core.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

LINE_BYTES = 64

PREDICTORS = ("popet", "hmp", "ttp", "oracle", "never", "always")
HERMES_MODES = ("off", "on", "ideal")
PREFETCHERS = ("off", "next-line", "stride")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CacheConfig:
    capacity_bytes: int
    ways: int
    latency: int  # round-trip cycles
    mshrs: int

    @property
    def n_sets(self):
        return self.capacity_bytes // (self.ways * LINE_BYTES)

    def check(self, name=""):
        if self.capacity_bytes <= 0 or self.capacity_bytes % (self.ways * LINE_BYTES):
            raise ConfigError(
                f"{name} capacity {self.capacity_bytes} not divisible by ways*64"
            )
        if self.ways <= 0 or self.latency <= 0 or self.mshrs <= 0:
            raise ConfigError(f"{name} ways/latency/mshrs must be positive")


@dataclass(frozen=True)
class HierarchyConfig:
    l1: CacheConfig = CacheConfig(48 * 1024, 12, 5, 16)
    l2: CacheConfig = CacheConfig(1280 * 1024, 20, 15, 48)
    llc: CacheConfig = CacheConfig(3 * 1024 * 1024, 12, 55, 64)
    dram_latency: int = 110
    rq_size: int = 64
    queue_penalty: int = 0  # extra cycles per outstanding request at entry
    prefetcher: str = "off"
    prefetch_degree: int = 1

    def check(self):
        self.l1.check("l1")
        self.l2.check("l2")
        self.llc.check("llc")
        if not self.l1.latency < self.l2.latency < self.llc.latency:
            raise ConfigError("latencies must strictly increase L1 < L2 < LLC")
        if self.dram_latency <= 0 or self.rq_size <= 0:
            raise ConfigError("dram_latency and rq_size must be positive")
        if self.queue_penalty < 0:
            raise ConfigError("queue_penalty must be >= 0")
        if self.prefetcher not in PREFETCHERS:
            raise ConfigError(f"prefetcher must be one of {PREFETCHERS}")
        if self.prefetch_degree < 1:
            raise ConfigError("prefetch_degree must be >= 1")


@dataclass(frozen=True)
class CoreConfig:
    rob_entries: int = 512
    lq_entries: int = 128
    retire_width: int = 6

    def check(self):
        if self.lq_entries > self.rob_entries:
            raise ConfigError("lq_entries must not exceed rob_entries")
        if min(self.rob_entries, self.lq_entries, self.retire_width) < 1:
            raise ConfigError("core window parameters must be positive")


@dataclass(frozen=True)
class PopetConfig:
    tau_act: int = -18
    t_n: int = -35
    t_p: int = 40
    features: tuple = ()      # empty -> default selected feature set
    table_sizes: dict = field(default_factory=dict)
    scale_thresholds: bool = True  # scale thresholds when fewer features run

    def check(self):
        for v in (self.tau_act, self.t_n, self.t_p):
            if not -80 <= v <= 75:
                raise ConfigError("thresholds must lie in [-80, 75]")
        if not self.t_n < self.tau_act < self.t_p:
            raise ConfigError("require t_n < tau_act < t_p")


@dataclass(frozen=True)
class HmpConfig:
    local_entries: int = 512
    local_history_bits: int = 8
    pattern_entries: int = 2048
    gshare_entries: int = 8192
    gskew_entries: int = 4096  # per table, three tables
    budget_bytes: int = 11 * 1024


@dataclass(frozen=True)
class TtpConfig:
    budget_bytes: int = 1536 * 1024
    tag_bits: int = 16  # 0 means full tags (oracle-equivalence mode)
    ways: int = 8

    @property
    def entries(self):
        if self.tag_bits == 0:
            return self.budget_bytes // 8  # full tags bookkeeping only
        return self.budget_bytes * 8 // self.tag_bits


@dataclass(frozen=True)
class SimConfig:
    hierarchy: HierarchyConfig = HierarchyConfig()
    core: CoreConfig = CoreConfig()
    predictor: str = "popet"
    hermes: str = "off"
    issue_latency: int = 6  # 6 optimistic, 18 pessimistic
    popet: PopetConfig = PopetConfig()
    hmp: HmpConfig = HmpConfig()
    ttp: TtpConfig = TtpConfig()

    def check(self):
        self.hierarchy.check()
        self.core.check()
        self.popet.check()
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"predictor must be one of {PREDICTORS}")
        if self.hermes not in HERMES_MODES:
            raise ConfigError(f"hermes must be one of {HERMES_MODES}")
        if self.issue_latency < 0:
            raise ConfigError("issue_latency must be >= 0")
        return self


def _cache_from(d):
    return CacheConfig(**d)


def config_from_dict(d: dict) -> SimConfig:
    kw = {}
    if "hierarchy" in d:
        h = dict(d["hierarchy"])
        for lvl in ("l1", "l2", "llc"):
            if lvl in h:
                h[lvl] = _cache_from(h[lvl])
        kw["hierarchy"] = HierarchyConfig(**h)
    if "core" in d:
        kw["core"] = CoreConfig(**d["core"])
    if "popet" in d:
        p = dict(d["popet"])
        if "features" in p:
            p["features"] = tuple(p["features"])
        kw["popet"] = PopetConfig(**p)
    if "hmp" in d:
        kw["hmp"] = HmpConfig(**d["hmp"])
    if "ttp" in d:
        kw["ttp"] = TtpConfig(**d["ttp"])
    for key in ("predictor", "hermes", "issue_latency"):
        if key in d:
            kw[key] = d[key]
    return SimConfig(**kw).check()


def config_to_dict(cfg: SimConfig) -> dict:
    d = asdict(cfg)
    d["popet"]["features"] = list(cfg.popet.features)
    return d


def load_config(path) -> SimConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: SimConfig, path):
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def with_overrides(cfg: SimConfig, **kw) -> SimConfig:
    return replace(cfg, **kw).check()
