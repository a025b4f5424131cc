"""Comparison off-chip predictors behind the common predict/train protocol.

HMP combines three history predictors (a per-PC local predictor, a
global-history-XOR-PC table, and three skewed-hash tables voting among
themselves) and answers with the majority of the three component votes.
All counters are 2-bit saturating, initialized weakly on-chip, trained
toward every observed outcome.

TTP keeps partial tags of the cache lines believed resident anywhere
on-chip, maintained by hierarchy fill/evict hooks rather than by training;
a load whose partial tag is absent is predicted to go off-chip.  Partial
tags alias, and the metadata only learns about a fill when the data lands,
which is exactly what costs it accuracy on bursty same-line traffic.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import HmpConfig, TtpConfig
from .popet import Predictor, fold

MASK64 = (1 << 64) - 1


def rotl64(x, r):
    r %= 64
    return ((x << r) | (x >> (64 - r))) & MASK64


@dataclass
class TtpToken:
    owner: int
    prediction: bool
    trained: bool = False


@dataclass
class HmpToken:
    owner: int
    pc: int
    local_idx: int
    pattern_idx: int
    gshare_idx: int
    gskew_idx: tuple
    votes: tuple
    prediction: bool
    trained: bool = False


class HmpPredictor(Predictor):
    name = "hmp"

    def __init__(self, cfg: HmpConfig | None = None):
        cfg = cfg or HmpConfig()
        self.cfg = cfg
        self.local_history = [0] * cfg.local_entries
        self.pattern = [1] * cfg.pattern_entries   # 2-bit, weakly on-chip
        self.gshare = [1] * cfg.gshare_entries
        self.gskew = [[1] * cfg.gskew_entries for _ in range(3)]
        self.ghr = 0
        self._hist_mask = (1 << cfg.local_history_bits) - 1
        if self.storage_bits() > cfg.budget_bytes * 8:
            raise ValueError("HMP geometry exceeds its storage budget")

    def storage_bits(self):
        c = self.cfg
        return (
            c.local_entries * c.local_history_bits
            + c.pattern_entries * 2
            + c.gshare_entries * 2
            + 3 * c.gskew_entries * 2
        )

    def _indices(self, pc):
        c = self.cfg
        local_idx = fold(pc, c.local_entries.bit_length() - 1)
        hist = self.local_history[local_idx]
        # pattern table: a few PC bits concatenated with the local history
        pc_bits = (c.pattern_entries >> c.local_history_bits).bit_length() - 1
        pattern_idx = (fold(pc, pc_bits) << c.local_history_bits) | hist
        gshare_bits = c.gshare_entries.bit_length() - 1
        gshare_idx = fold(pc, gshare_bits) ^ (self.ghr & (c.gshare_entries - 1))
        skew_bits = c.gskew_entries.bit_length() - 1
        gskew_idx = (
            fold(pc ^ (self.ghr << 1), skew_bits),
            fold(rotl64(pc, 21) ^ (self.ghr << 7), skew_bits),
            fold(rotl64(pc, 42) ^ (self.ghr << 13), skew_bits),
        )
        return local_idx, pattern_idx, gshare_idx, gskew_idx

    def predict_load(self, pc, vaddr, gap=0):
        local_idx, pattern_idx, gshare_idx, gskew_idx = self._indices(pc)
        local_vote = self.pattern[pattern_idx] >= 2
        gshare_vote = self.gshare[gshare_idx] >= 2
        skew_votes = sum(self.gskew[k][gskew_idx[k]] >= 2 for k in range(3))
        gskew_vote = skew_votes >= 2
        votes = (local_vote, gshare_vote, gskew_vote)
        prediction = sum(votes) >= 2
        token = HmpToken(
            id(self), pc, local_idx, pattern_idx, gshare_idx, gskew_idx, votes, prediction
        )
        return prediction, token

    def train_load(self, token: HmpToken, went_off_chip):
        self._claim(token)
        step = 1 if went_off_chip else -1

        def bump(table, i):
            table[i] = min(3, max(0, table[i] + step))

        bump(self.pattern, token.pattern_idx)
        bump(self.gshare, token.gshare_idx)
        for k in range(3):
            bump(self.gskew[k], token.gskew_idx[k])
        bit = 1 if went_off_chip else 0
        self.local_history[token.local_idx] = (
            (self.local_history[token.local_idx] << 1) | bit
        ) & self._hist_mask
        self.ghr = ((self.ghr << 1) | bit) & 0xFFFF


class TtpPredictor(Predictor):
    """Partial-tag tracker of on-chip contents; no training step exists, the
    hierarchy's fill/evict hooks maintain it."""

    name = "ttp"

    def __init__(self, cfg: TtpConfig | None = None):
        cfg = cfg or TtpConfig()
        self.cfg = cfg
        self.ways = cfg.ways
        self.n_sets = max(1, cfg.entries // cfg.ways)
        self.sets = {}  # set -> list of partial tags, oldest first (multiset)
        if cfg.tag_bits and cfg.entries * cfg.tag_bits > cfg.budget_bytes * 8:
            raise ValueError("TTP geometry exceeds its storage budget")

    def _where(self, line):
        ln = line >> 6
        s = ln % self.n_sets
        if self.cfg.tag_bits == 0:
            return s, ln  # full tags: exact mirroring
        return s, (ln // self.n_sets) & ((1 << self.cfg.tag_bits) - 1)

    def on_fill(self, line, cycle=0):
        s, tag = self._where(line)
        bucket = self.sets.setdefault(s, [])
        bucket.append(tag)
        if len(bucket) > self.ways:
            bucket.pop(0)

    def on_evict(self, line, cycle=0):
        s, tag = self._where(line)
        bucket = self.sets.get(s)
        if bucket and tag in bucket:
            bucket.remove(tag)  # exactly one instance

    def register_with(self, hierarchy):
        hierarchy.fill_listeners.append(self.on_fill)
        hierarchy.evict_listeners.append(self.on_evict)
        return self

    def resident(self, vaddr) -> bool:
        s, tag = self._where(vaddr & ~63)
        return tag in self.sets.get(s, ())

    def predict_load(self, pc, vaddr, gap=0):
        p = not self.resident(vaddr)
        return p, TtpToken(id(self), p)

    def train_load(self, token, went_off_chip):
        self._claim(token)  # metadata is hook-maintained; nothing to learn
