"""Multi-commodity demand matrices: TCG reduction and random steady traffic."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import SpecError
from .tcg import RtParams, Tcg, TimingSpec

Pair = tuple[int, int]


@dataclass
class DemandMatrix:
    """Per ordered PE pair: worst-case rate ``bw`` and average rate ``avg_bw`` (flits/slot)."""

    bw: dict[Pair, Fraction] = field(default_factory=dict)
    avg_bw: dict[Pair, Fraction] = field(default_factory=dict)
    phi: int | None = None

    def __post_init__(self):
        for (i, j), v in list(self.bw.items()) + list(self.avg_bw.items()):
            if i == j and v != 0:
                raise SpecError(f"self-demand on PE {i}")
            if v < 0:
                raise SpecError(f"negative demand on pair {(i, j)}")
        self.bw = {k: Fraction(v) for k, v in sorted(self.bw.items()) if v != 0 and k[0] != k[1]}
        self.avg_bw = {k: Fraction(v) for k, v in sorted(self.avg_bw.items()) if v != 0 and k[0] != k[1]}

    @property
    def pairs(self) -> list[Pair]:
        return sorted(set(self.bw) | set(self.avg_bw))

    def total(self) -> Fraction:
        return sum(self.bw.values(), Fraction(0))

    def to_dict(self) -> dict:
        return {
            "phi": self.phi,
            "pairs": [{"src_pe": i, "dst_pe": j,
                       "max_rate": str(self.bw.get((i, j), Fraction(0))),
                       "avg_rate": str(self.avg_bw.get((i, j), Fraction(0)))}
                      for i, j in self.pairs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DemandMatrix":
        bw, avg = {}, {}
        for p in data["pairs"]:
            key = (int(p["src_pe"]), int(p["dst_pe"]))
            bw[key] = Fraction(p["max_rate"])
            avg[key] = Fraction(p.get("avg_rate", p["max_rate"]))
        return cls(bw, avg, data.get("phi"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "DemandMatrix":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class FlowInterval:
    pair: Pair
    start: Fraction
    length: Fraction
    rate: Fraction

    @property
    def end(self) -> Fraction:
        return self.start + self.length


def max_overlap(intervals: Iterable[tuple[Fraction, Fraction, Fraction]]) -> Fraction:
    """Peak of the summed rate over half-open intervals ``(start, end, rate)``."""
    events = []
    for start, end, rate in intervals:
        if end <= start:
            continue
        events.append((start, 1, rate))
        events.append((end, 0, rate))
    # ends sort before starts at the same instant: abutting intervals do not overlap
    events.sort(key=lambda ev: (ev[0], ev[1]))
    cur = best = Fraction(0)
    for _, is_start, rate in events:
        cur = cur + rate if is_start else cur - rate
        best = max(best, cur)
    return best


def reduce_tcg(tcg: Tcg, params: RtParams, spec: TimingSpec, flit_bits: int,
               mapping: dict[int, int] | None = None) -> tuple[DemandMatrix, list[FlowInterval]]:
    """Demand of each PE pair = peak total rate of its concurrently active messages.

    A message ``m`` on task edge ``(a, b)`` occupies ``[end(a), end(a) + L + |m|/alpha)``
    at rate ``|m|/alpha`` (bits/slot, converted to flits/slot).  ``avg_bw`` is the
    flit volume actually sent on the pair divided by the specification makespan.
    """
    if not params.finite:
        raise SpecError("the reduction is undefined for alpha = infinity")
    mapping = tcg.mapping if mapping is None else mapping
    for t in tcg.tasks:
        if t.id not in mapping:
            raise SpecError(f"task {t.id} is not mapped to a PE")
    intervals = []
    volume: dict[Pair, int] = {}
    for m in tcg.messages:
        i, j = mapping[m.src], mapping[m.dst]
        if i == j:
            continue
        rate = params.transfer(m.bits) / flit_bits
        intervals.append(FlowInterval((i, j), spec.end[m.src], params.delay(m.bits), rate))
        volume[(i, j)] = volume.get((i, j), 0) + math.ceil(m.bits / flit_bits)
    by_pair: dict[Pair, list] = {}
    for iv in intervals:
        by_pair.setdefault(iv.pair, []).append((iv.start, iv.end, iv.rate))
    bw = {pair: max_overlap(ivs) for pair, ivs in by_pair.items()}
    horizon = spec.makespan
    if horizon <= 0:
        raise SpecError("specification makespan must be positive")
    avg = {pair: Fraction(v) / horizon for pair, v in volume.items()}
    return DemandMatrix(bw, avg), intervals


def gen_random_demands(n_pes: int, seed: int, phi: int, max_flits: int = 5,
                       pes: Sequence[int] | None = None) -> DemandMatrix:
    """Steady traffic: every ordered pair sends ``U{0..max_flits}`` flits per period."""
    if n_pes < 2:
        raise SpecError("need at least two PEs")
    if phi < 1:
        raise SpecError("period must be positive")
    pes = list(range(n_pes)) if pes is None else list(pes)
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, max_flits + 1, size=(n_pes, n_pes))
    bw = {}
    for a in range(n_pes):
        for b in range(n_pes):
            if a != b and draws[a, b]:
                bw[(pes[a], pes[b])] = Fraction(int(draws[a, b]), phi)
    return DemandMatrix(bw, dict(bw), phi)


def utilization_bound(dm: DemandMatrix) -> Fraction:
    total_max = sum(dm.bw.values(), Fraction(0))
    if total_max == 0:
        raise SpecError("utilization bound undefined for an all-zero demand matrix")
    return sum(dm.avg_bw.values(), Fraction(0)) / total_max
