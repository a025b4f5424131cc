"""offsim: trace-driven memory-hierarchy simulation with off-chip load
prediction and speculative main-memory requests."""

from .config import (
    CacheConfig,
    CoreConfig,
    HierarchyConfig,
    PopetConfig,
    SimConfig,
    load_config,
    save_config,
)
from .core import ideal_hermes_mode, simulate
from .hierarchy import Hierarchy
from .metrics import SimMetrics, accuracy, coverage, memory_overhead, speedup
from .popet import PopetPredictor
from .trace import LoadRecord, gen_mixed, gen_pointer_chase, gen_stream, read_trace, write_trace

__version__ = "0.1.0"

__all__ = [
    "CacheConfig",
    "CoreConfig",
    "Hierarchy",
    "HierarchyConfig",
    "LoadRecord",
    "PopetConfig",
    "PopetPredictor",
    "SimConfig",
    "SimMetrics",
    "accuracy",
    "coverage",
    "gen_mixed",
    "gen_pointer_chase",
    "gen_stream",
    "ideal_hermes_mode",
    "load_config",
    "memory_overhead",
    "read_trace",
    "save_config",
    "simulate",
    "speedup",
    "write_trace",
]
