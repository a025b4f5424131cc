"""Perceptron-style off-chip load predictor and the common predictor API.

Each program feature owns a small table of 5-bit saturating signed weights.
A prediction hashes every feature value into its table, sums the indexed
weights into a cumulative weight, and fires when that sum exceeds the
activation threshold.  Training replays the indices captured at prediction
time and nudges each weight one step toward the observed outcome, skipped
entirely when the captured sum was already past a training threshold so
individual weights do not over-saturate and the tables can track phase
changes.

All predictors speak the same two-call protocol: ``predict_load`` returns
``(prediction, token)`` where the token carries whatever metadata training
needs, and ``train_load(token, went_off_chip)`` consumes it exactly once.

Hashing is an XOR fold of the raw feature value into log2(table_size)-bit
chunks; it is fixed so that serialized predictor state and golden tests stay
stable across runs.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass

from .config import PopetConfig

WEIGHT_MIN = -16
WEIGHT_MAX = 15

PAGE_SHIFT = 12
LINE_SHIFT = 6


def fold(value, bits):
    """XOR-fold an arbitrary non-negative int into ``bits`` bits."""
    mask = (1 << bits) - 1
    acc = 0
    while value:
        acc ^= value & mask
        value >>= bits
    return acc


def shifted_xor(pcs):
    """Path fold of four PCs, newest first."""
    return (pcs[0] << 3) ^ (pcs[1] << 2) ^ (pcs[2] << 1) ^ pcs[3]


@dataclass(frozen=True)
class FeatureContext:
    """Raw inputs every feature extractor sees for one load."""

    pc: int
    vaddr: int
    first_access: bool
    load_pcs: tuple  # last four load PCs, newest first
    any_pcs: tuple   # last four instruction PCs (loads + synthetic), newest first


def _line_offset(v):
    return (v >> LINE_SHIFT) & 63


# The full candidate feature catalog: name -> (default table size, extractor).
CANDIDATE_FEATURES = OrderedDict(
    [
        ("vaddr", (1024, lambda c: c.vaddr)),
        ("page", (1024, lambda c: c.vaddr >> PAGE_SHIFT)),
        ("line_offset", (1024, lambda c: _line_offset(c.vaddr))),
        ("first_access", (1024, lambda c: int(c.first_access))),
        (
            "line_offset_first_access",
            (128, lambda c: (_line_offset(c.vaddr) << 1) | int(c.first_access)),
        ),
        ("byte_offset", (1024, lambda c: c.vaddr & 63)),
        ("word_offset", (1024, lambda c: (c.vaddr >> 2) & 15)),
        ("pc", (1024, lambda c: c.pc)),
        ("pc_xor_vaddr", (1024, lambda c: c.pc ^ c.vaddr)),
        ("pc_xor_page", (1024, lambda c: c.pc ^ (c.vaddr >> PAGE_SHIFT))),
        ("pc_xor_line_offset", (1024, lambda c: c.pc ^ _line_offset(c.vaddr))),
        ("pc_first_access", (1024, lambda c: (c.pc << 1) | int(c.first_access))),
        ("pc_xor_byte_offset", (1024, lambda c: c.pc ^ (c.vaddr & 63))),
        ("pc_xor_word_offset", (1024, lambda c: c.pc ^ ((c.vaddr >> 2) & 15))),
        ("last4_load_pcs", (1024, lambda c: shifted_xor(c.load_pcs))),
        ("last4_pcs", (1024, lambda c: shifted_xor(c.any_pcs))),
    ]
)

# Production feature set: the combination that won automated selection.
SELECTED_FEATURES = (
    "pc_xor_line_offset",
    "pc_xor_byte_offset",
    "pc_first_access",
    "line_offset_first_access",
    "last4_load_pcs",
)


class PageBuffer:
    """64-entry LRU map of {page -> touched-line bitmap} backing the
    first-access hint: a load is a first access when its page is untracked
    or its line bit is still clear, and the query sets the bit."""

    def __init__(self, entries=64):
        self.entries = entries
        self.pages = OrderedDict()

    def first_access(self, vaddr) -> bool:
        page = vaddr >> PAGE_SHIFT
        bit = 1 << _line_offset(vaddr)
        bitmap = self.pages.get(page)
        if bitmap is None:
            if len(self.pages) >= self.entries:
                self.pages.popitem(last=False)
            self.pages[page] = bit
            return True
        self.pages.move_to_end(page)
        if bitmap & bit:
            return False
        self.pages[page] = bitmap | bit
        return True


@dataclass
class LqToken:
    """Metadata captured at prediction time and replayed at training."""

    owner: int
    indices: tuple  # ((feature, index), ...)
    w_sigma: int
    prediction: bool
    trained: bool = False


class Predictor:
    """Uniform predict/train protocol all predictors implement."""

    name = "?"

    def predict_load(self, pc, vaddr, gap=0):
        raise NotImplementedError

    def train_load(self, token, went_off_chip):
        raise NotImplementedError

    def _claim(self, token):
        if getattr(token, "owner", None) != id(self):
            raise ValueError("token does not belong to this predictor")
        if token.trained:
            raise ValueError("token already trained")
        token.trained = True


def scale_threshold(value, n_features):
    """Thresholds assume five 5-bit weights; rescale for smaller sets so a
    single-feature predictor can still reach both polarities."""
    return round(value * n_features / 5)


class PopetPredictor(Predictor):
    name = "popet"

    def __init__(self, cfg: PopetConfig | None = None):
        cfg = cfg or PopetConfig()
        cfg.check()
        self.cfg = cfg
        self.features = tuple(cfg.features) or SELECTED_FEATURES
        if len(set(self.features)) != len(self.features):
            raise ValueError("duplicate features")
        for f in self.features:
            if f not in CANDIDATE_FEATURES:
                raise ValueError(f"unknown feature {f!r}")
        self.table_sizes = {}
        for f in self.features:
            size = cfg.table_sizes.get(f, CANDIDATE_FEATURES[f][0])
            if size <= 0 or size & (size - 1):
                raise ValueError(f"table size for {f} must be a power of two")
            self.table_sizes[f] = size
        n = len(self.features)
        if cfg.scale_thresholds and n != 5:
            self.tau_act = scale_threshold(cfg.tau_act, n)
            self.t_n = scale_threshold(cfg.t_n, n)
            self.t_p = scale_threshold(cfg.t_p, n)
        else:
            self.tau_act, self.t_n, self.t_p = cfg.tau_act, cfg.t_n, cfg.t_p
        if not self.t_n < self.tau_act < self.t_p:
            raise ValueError("scaled thresholds lost their ordering")
        self.weights = {f: [0] * self.table_sizes[f] for f in self.features}
        self.page_buffer = PageBuffer()
        self.load_pcs = (0, 0, 0, 0)
        self.any_pcs = (0, 0, 0, 0)
        self._last_pc = 0

    # -- feature pipeline ---------------------------------------------------

    def extract_features(self, pc, vaddr):
        """Raw feature values and hashed table indices for one load. Queries
        (and updates) the page buffer; history updates happen afterwards in
        predict_load."""
        ctx = FeatureContext(
            pc=pc,
            vaddr=vaddr,
            first_access=self.page_buffer.first_access(vaddr),
            load_pcs=self.load_pcs,
            any_pcs=self.any_pcs,
        )
        indices = tuple(
            (f, fold(CANDIDATE_FEATURES[f][1](ctx), self.table_sizes[f].bit_length() - 1))
            for f in self.features
        )
        return ctx, indices

    def _push_history(self, pc, gap):
        if gap:
            # Non-memory instructions carry no PCs in the trace; synthesize
            # sequential ones after the previous load for the path feature.
            for j in range(max(1, gap - 3), gap + 1):
                self.any_pcs = (self._last_pc + 4 * j,) + self.any_pcs[:3]
        self.load_pcs = (pc,) + self.load_pcs[:3]
        self.any_pcs = (pc,) + self.any_pcs[:3]
        self._last_pc = pc

    # -- predict / train ------------------------------------------------------

    def predict_load(self, pc, vaddr, gap=0):
        ctx, indices = self.extract_features(pc, vaddr)
        w_sigma = sum(self.weights[f][i] for f, i in indices)
        prediction = w_sigma > self.tau_act
        self._push_history(pc, gap)
        return prediction, LqToken(id(self), indices, w_sigma, prediction)

    def train_load(self, token, went_off_chip):
        self._claim(token)
        if not self.t_n <= token.w_sigma <= self.t_p:
            return  # saturation gate: skip to avoid over-saturating weights
        step = 1 if went_off_chip else -1
        for f, i in token.indices:
            table = self.weights[f]
            table[i] = min(WEIGHT_MAX, max(WEIGHT_MIN, table[i] + step))

    # -- state blob ------------------------------------------------------------

    STATE_MAGIC = b"OFPW"
    STATE_VERSION = 1

    def dump_state(self) -> bytes:
        out = [self.STATE_MAGIC, struct.pack("<H", self.STATE_VERSION)]
        out.append(struct.pack("<bbbB", self.tau_act, self.t_n, self.t_p, len(self.features)))
        for f in self.features:
            name = f.encode()
            out.append(struct.pack("<B", len(name)))
            out.append(name)
            out.append(struct.pack("<I", self.table_sizes[f]))
            out.append(struct.pack(f"<{self.table_sizes[f]}b", *self.weights[f]))
        out.append(struct.pack("<8Q", *self.load_pcs, *self.any_pcs))
        out.append(struct.pack("<QB", self._last_pc, len(self.page_buffer.pages)))
        for page, bm in self.page_buffer.pages.items():  # oldest first
            out.append(struct.pack("<QQ", page, bm))
        return b"".join(out)

    def load_state(self, blob: bytes):
        if blob[:4] != self.STATE_MAGIC:
            raise ValueError("bad predictor state magic")
        (version,) = struct.unpack_from("<H", blob, 4)
        if version != self.STATE_VERSION:
            raise ValueError(f"unsupported predictor state version {version}")
        off = 6
        tau, tn, tp, nfeat = struct.unpack_from("<bbbB", blob, off)
        off += 4
        self.tau_act, self.t_n, self.t_p = tau, tn, tp
        features = []
        weights = {}
        sizes = {}
        for _ in range(nfeat):
            (ln,) = struct.unpack_from("<B", blob, off)
            off += 1
            name = blob[off : off + ln].decode()
            off += ln
            (size,) = struct.unpack_from("<I", blob, off)
            off += 4
            weights[name] = list(struct.unpack_from(f"<{size}b", blob, off))
            off += size
            sizes[name] = size
            features.append(name)
        self.features = tuple(features)
        self.table_sizes = sizes
        self.weights = weights
        vals = struct.unpack_from("<8Q", blob, off)
        off += 64
        self.load_pcs, self.any_pcs = vals[:4], vals[4:]
        self._last_pc, npages = struct.unpack_from("<QB", blob, off)
        off += 9
        self.page_buffer = PageBuffer()
        for _ in range(npages):
            page, bm = struct.unpack_from("<QQ", blob, off)
            off += 16
            self.page_buffer.pages[page] = bm
        if off != len(blob):
            raise ValueError("trailing bytes in predictor state")


class NeverPredictor(Predictor):
    """Always predicts on-chip; the speculative datapath degenerates to the
    baseline."""

    name = "never"

    def predict_load(self, pc, vaddr, gap=0):
        return False, LqToken(id(self), (), 0, False)

    def train_load(self, token, went_off_chip):
        self._claim(token)


class AlwaysPredictor(Predictor):
    name = "always"

    def predict_load(self, pc, vaddr, gap=0):
        return True, LqToken(id(self), (), 0, True)

    def train_load(self, token, went_off_chip):
        self._claim(token)


class OraclePredictor(Predictor):
    """Perfect prediction from ground truth supplied by the caller, e.g. a
    hierarchy peek; realizes the upper-bound datapath."""

    name = "oracle"

    def __init__(self, outcome_fn):
        self.outcome_fn = outcome_fn

    def predict_load(self, pc, vaddr, gap=0):
        p = bool(self.outcome_fn(pc, vaddr))
        return p, LqToken(id(self), (), 0, p)

    def train_load(self, token, went_off_chip):
        self._claim(token)
