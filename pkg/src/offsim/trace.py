"""Load-trace format and synthetic workload generators.

A trace is a flat little-endian binary file holding one record per dynamic
load.  Stores are not modeled; the count of non-memory instructions retired
since the previous load travels in the record's ``gap`` field so the core
model can account for retirement bandwidth without carrying full instruction
semantics.

File layout (all little-endian):

    offset  size  field
    0       8     magic, fixed b"LOADTRC1"
    8       2     version (currently 1)
    10      2     flags (reserved, 0)
    12      8     record_count
    20      2     max_gap (largest gap of any record in the file)
    22      2     generator string length N
    24      N     generator provenance string, UTF-8
    24+N    19*k  records: pc u64, vaddr u64, size u8, gap u16

Addresses are treated as physical; no translation is modeled.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

LINE_BYTES = 64

MAGIC = b"LOADTRC1"
VERSION = 1
_HEADER = struct.Struct("<8sHHQHH")
_RECORD = struct.Struct("<QQBH")

VALID_SIZES = (1, 2, 4, 8, 16, 32, 64)
MAX_GAP = 0xFFFF

# Fixed synthetic PCs / base addresses so generated traces are reproducible
# and recognizable in feature-index space.
STREAM_PC = 0x0000000000401000
STREAM_BASE = 0x0000000010000000
CHASE_PC = 0x0000000000402000
CHASE_BASE = 0x0000000020000000


class TraceError(Exception):
    """Base class for trace file problems."""


class TraceFormatError(TraceError):
    """Bad magic or unsupported version."""


class TraceIntegrityError(TraceError):
    """Truncated or inconsistent file; ``offset`` is the failing byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class TraceValidationError(TraceError):
    """A record violates the format invariants; ``index`` names the record."""

    def __init__(self, message, index):
        super().__init__(f"record {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class LoadRecord:
    """One dynamic load: instruction address, data address, size, and the
    number of non-memory instructions retired since the previous load."""

    pc: int
    vaddr: int
    size: int = 8
    gap: int = 0

    def check(self):
        if not 0 <= self.pc < 1 << 64:
            raise ValueError("pc out of 64-bit range")
        if not 0 <= self.vaddr < 1 << 64:
            raise ValueError("vaddr out of 64-bit range")
        if self.size not in VALID_SIZES:
            raise ValueError(f"size {self.size} not in {VALID_SIZES}")
        if (self.vaddr % LINE_BYTES) + self.size > LINE_BYTES:
            raise ValueError("access crosses a 64-byte line boundary")
        if not 0 <= self.gap <= MAX_GAP:
            raise ValueError(f"gap {self.gap} outside [0, {MAX_GAP}]")

    @property
    def line(self):
        return self.vaddr & ~(LINE_BYTES - 1)


@dataclass(frozen=True)
class TraceHeader:
    magic: bytes
    version: int
    record_count: int
    max_gap: int
    generator: str


def write_trace(path, records: Iterable[LoadRecord], generator: str = "") -> int:
    """Write records to ``path``; returns the number written.

    Records may be a one-shot iterator: the header is patched with the final
    count and max gap after the stream is exhausted.
    """
    gen_bytes = generator.encode("utf-8")
    count = 0
    max_gap = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, 0, 0, len(gen_bytes)))
        fh.write(gen_bytes)
        pack = _RECORD.pack
        for rec in records:
            try:
                rec.check()
            except ValueError as exc:
                raise TraceValidationError(str(exc), count) from exc
            fh.write(pack(rec.pc, rec.vaddr, rec.size, rec.gap))
            if rec.gap > max_gap:
                max_gap = rec.gap
            count += 1
        fh.seek(0)
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, count, max_gap, len(gen_bytes)))
    return count


def read_header(path) -> TraceHeader:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise TraceIntegrityError("file shorter than fixed header", len(raw))
        magic, version, _flags, count, max_gap, gen_len = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise TraceFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise TraceFormatError(f"unsupported version {version}")
        gen = fh.read(gen_len)
        if len(gen) < gen_len:
            raise TraceIntegrityError("truncated generator string", _HEADER.size + len(gen))
        return TraceHeader(magic, version, count, max_gap, gen.decode("utf-8"))


def read_trace(path) -> Iterator[LoadRecord]:
    """Stream records from ``path`` in file order.

    Header problems raise immediately; truncation raises mid-stream with the
    byte offset where the incomplete record starts.
    """
    header = read_header(path)  # validates eagerly

    def _records():
        with open(path, "rb") as fh:
            fh.seek(_HEADER.size)
            fh.seek(len(header.generator.encode("utf-8")), 1)
            start = fh.tell()
            unpack = _RECORD.unpack
            for i in range(header.record_count):
                raw = fh.read(_RECORD.size)
                if len(raw) < _RECORD.size:
                    raise TraceIntegrityError(
                        f"truncated record {i} of {header.record_count}",
                        start + i * _RECORD.size,
                    )
                pc, vaddr, size, gap = unpack(raw)
                if gap > header.max_gap:
                    raise TraceIntegrityError(
                        f"record {i} gap {gap} exceeds declared header maximum "
                        f"{header.max_gap}",
                        start + i * _RECORD.size,
                    )
                yield LoadRecord(pc, vaddr, size, gap)
            trailing = fh.read(1)
            if trailing:
                raise TraceIntegrityError(
                    "trailing bytes beyond declared record_count",
                    start + header.record_count * _RECORD.size,
                )

    return _records()


def gen_stream(array_bytes, element_size, passes=1, gap=0, pc=STREAM_PC,
               base=STREAM_BASE) -> Iterator[LoadRecord]:
    """Sequential loads at stride ``element_size`` over an array, repeated
    ``passes`` times from a single synthetic PC.

    Every (64 // element_size)-th load starts a new cache line, so the
    off-chip outcome of a large stream is a pure function of the byte offset.
    """
    if element_size not in VALID_SIZES:
        raise ValueError(f"element_size must divide 64, got {element_size}")
    if array_bytes <= 0 or array_bytes % LINE_BYTES:
        raise ValueError("array_bytes must be a positive multiple of 64")
    n = array_bytes // element_size
    for _ in range(passes):
        for i in range(n):
            yield LoadRecord(pc, base + i * element_size, element_size, gap)


def gen_pointer_chase(working_set_bytes, node_count, seed=0, gap=0, passes=1,
                      pc=CHASE_PC, base=CHASE_BASE) -> Iterator[LoadRecord]:
    """Loads walking a seeded random permutation cycle over ``node_count``
    distinct cache lines spread across the working set."""
    if node_count < 2:
        raise ValueError("node_count must be at least 2")
    lines = working_set_bytes // LINE_BYTES
    if lines < node_count:
        raise ValueError("working_set_bytes too small for node_count lines")
    rng = random.Random(seed)
    order = rng.sample(range(lines), node_count)
    for _ in range(passes):
        for ln in order:
            yield LoadRecord(pc, base + ln * LINE_BYTES, 8, gap)


@dataclass(frozen=True)
class MixedComponent:
    """One constituent of a mixed workload: a named generator plus weight."""

    kind: str  # "stream" or "chase"
    weight: float
    params: dict = field(default_factory=dict)


def _component_stream(comp: MixedComponent, seed):
    params = dict(comp.params)
    if comp.kind == "stream":
        params.setdefault("array_bytes", 1 << 16)
        params.setdefault("element_size", 4)
        params.pop("seed", None)
        return lambda: gen_stream(passes=1, **params)
    if comp.kind == "chase":
        params.setdefault("working_set_bytes", 1 << 20)
        params.setdefault("node_count", 512)
        params.setdefault("seed", seed)
        return lambda: gen_pointer_chase(passes=1, **params)
    raise ValueError(f"unknown component kind {comp.kind!r}")


def _forever(factory):
    while True:
        yield from factory()


def gen_mixed(components, records, seed=0, tagged=False):
    """Deterministically interleave component generators.

    Record shares follow component weights via deficit scheduling, so counts
    stay within one record of the ideal share at every prefix.  With
    ``tagged`` each yield is ``(component_tag, record)`` for debugging and
    proportion checks.
    """
    if not components:
        raise ValueError("mixed spec needs at least one component")
    total = sum(c.weight for c in components)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"component weights sum to {total}, expected 1")
    if any(c.weight <= 0 for c in components):
        raise ValueError("component weights must be positive")
    sources = [
        _forever(_component_stream(c, seed + 1000003 * k))
        for k, c in enumerate(components)
    ]
    emitted = [0] * len(components)
    tags = [f"{k}:{c.kind}" for k, c in enumerate(components)]
    for t in range(records):
        # Largest deficit first; ties resolve to the lowest index.
        best = max(
            range(len(components)),
            key=lambda k: (components[k].weight * (t + 1) - emitted[k], -k),
        )
        emitted[best] += 1
        rec = next(sources[best])
        yield (tags[best], rec) if tagged else rec
