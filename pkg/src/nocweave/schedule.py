"""Rounding, interconnection widths and greedy synthesis of a periodic TDM schedule.

A schedule repeats every ``phi`` slots.  Each edge carries a template with
``phi`` rows and one column per lane; an entry names the token sequence that
owns that (slot, lane).  A token sequence books one entry on every edge of
its path and carries one flit per period end to end.

Timing convention: a flit sent on an edge in slot ``t`` can leave the next
node from slot ``t + 1``; it reaches a destination NI at the end of the slot
of its last hop.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import SchedulingError
from .graph import NocGraph
from .mcf.model import Commodity, PathFlow

DEFAULT_PHI = 8


@dataclass(frozen=True)
class RoundedPathFlow:
    commodity: Commodity
    path: tuple[int, ...]
    slots: int
    phi: int

    @property
    def amount(self) -> Fraction:
        return Fraction(self.slots, self.phi)


def round_flows(path_flows: Sequence[PathFlow], phi: int,
                commodities: Sequence[Commodity] | None = None) -> list[RoundedPathFlow]:
    """Round path flows up to multiples of ``1/phi``, largest first, until the demand is met.

    Paths left over once the remaining demand reaches zero are dropped.
    """
    if phi < 1:
        raise SchedulingError("period must be at least 1")
    groups: dict[Commodity, list[PathFlow]] = {}
    for pf in path_flows:
        groups.setdefault(pf.commodity, []).append(pf)
    for c in commodities or ():
        if c not in groups:
            raise SchedulingError(f"commodity {c.src}->{c.dst} has demand but no flow paths")
    out = []
    for c in sorted(groups):
        remaining = c.demand
        for pf in sorted(groups[c], key=lambda p: (-p.amount, p.path)):
            if remaining <= 0:
                break
            slots = math.ceil(pf.amount * phi)
            if slots == 0:
                continue
            out.append(RoundedPathFlow(c, tuple(pf.path), slots, phi))
            remaining -= Fraction(slots, phi)
        if remaining > 0:
            raise SchedulingError(f"commodity {c.src}->{c.dst}: paths carry less than the demand")
    return out


def edge_load(rounded: Sequence[RoundedPathFlow], n_edges: int) -> list[Fraction]:
    load = [Fraction(0)] * n_edges
    for rf in rounded:
        for e in rf.path:
            load[e] += rf.amount
    return load


def assign_widths(graph: NocGraph, rounded: Sequence[RoundedPathFlow],
                  flit_bits: int | None = None) -> tuple[NocGraph, list[int]]:
    """Width of each edge = ``ceil(f'(e)) * k`` bits; returns the sized graph and the lane counts."""
    k = graph.flit_bits if flit_bits is None else flit_bits
    lanes = [math.ceil(f) for f in edge_load(rounded, len(graph.edges))]
    return graph.with_widths([n * k for n in lanes]), lanes


@dataclass
class TokenSequence:
    id: int
    commodity: Commodity
    path: tuple[int, ...]
    times: tuple[int, ...]  # unrolled send slot on every hop; times[0] in [0, phi)
    lanes: tuple[int, ...]
    phi: int

    @property
    def hops(self) -> list[tuple[int, int]]:
        return [(t % self.phi, lane) for t, lane in zip(self.times, self.lanes)]

    @property
    def t(self) -> int:
        return self.times[0]

    @property
    def D(self) -> int:
        return self.times[-1] + 1 - self.times[0]


@dataclass
class PeriodicSchedule:
    phi: int
    lanes: list[int]
    templates: dict[int, list[list[int | None]]]
    sequences: list[TokenSequence]
    reorder_gaps: dict[Commodity, list[int]] = field(default_factory=dict)

    def by_commodity(self) -> dict[Commodity, list[TokenSequence]]:
        out: dict[Commodity, list[TokenSequence]] = {}
        for s in self.sequences:
            out.setdefault(s.commodity, []).append(s)
        return out

    def to_dict(self) -> dict:
        edges = [{"edge": e, "lanes": self.lanes[e], "template": self.templates[e]}
                 for e in sorted(self.templates)]
        seqs = [{"id": s.id, "commodity": _commodity_dict(s.commodity), "path": list(s.path),
                 "hops": [{"slot": sl, "lane": ln} for sl, ln in s.hops], "t": s.t, "D": s.D}
                for s in self.sequences]
        gaps = {f"{c.src}-{c.dst}": g for c, g in sorted(self.reorder_gaps.items())}
        return {"phi": self.phi, "lanes": self.lanes, "edges": edges, "sequences": seqs,
                "reorder_gaps": gaps}

    @classmethod
    def from_dict(cls, data: dict) -> "PeriodicSchedule":
        phi = int(data["phi"])
        templates = {int(e["edge"]): [list(row) for row in e["template"]] for e in data["edges"]}
        seqs = []
        for s in data["sequences"]:
            slots = [h["slot"] for h in s["hops"]]
            times = [slots[0]]
            for sl in slots[1:]:
                times.append(times[-1] + (sl - times[-1] - 1) % phi + 1)
            seqs.append(TokenSequence(int(s["id"]), _commodity_from(s["commodity"]), tuple(s["path"]),
                                      tuple(times), tuple(h["lane"] for h in s["hops"]), phi))
        sched = cls(phi, list(data["lanes"]), templates, seqs)
        sched.reorder_gaps = compute_reorder_gaps(sched)
        return sched

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "PeriodicSchedule":
        return cls.from_dict(json.loads(text))


def _commodity_dict(c: Commodity) -> dict:
    return {"src": c.src, "dst": c.dst, "demand": str(c.demand)}


def _commodity_from(d: dict) -> Commodity:
    return Commodity(int(d["src"]), int(d["dst"]), Fraction(d["demand"]))


def compute_reorder_gaps(schedule: PeriodicSchedule) -> dict[Commodity, list[int]]:
    """Arrival offsets between consecutive token sequences of each session."""
    gaps = {}
    for c, seqs in schedule.by_commodity().items():
        seqs = sorted(seqs, key=lambda s: s.id)
        gaps[c] = [(b.t + b.D) - (a.t + a.D) for a, b in zip(seqs, seqs[1:])]
    return gaps


def _greedy(order, phi, lanes):
    templates: dict[int, list[list[int | None]]] = {}
    booked = []
    for sid, (rf, _) in enumerate(order):
        times, lns = [], []
        for k, e in enumerate(rf.path):
            if lanes[e] < 1:
                return None, f"edge {e} has no lanes"
            table = templates.setdefault(e, [[None] * lanes[e] for _ in range(phi)])
            start = 0 if k == 0 else times[-1] + 1
            for t in range(start, start + phi):
                row = table[t % phi]
                free = next((ln for ln, v in enumerate(row) if v is None), None)
                if free is not None:
                    row[free] = sid
                    times.append(t)
                    lns.append(free)
                    break
            else:
                c = rf.commodity
                return None, f"no free slot on edge {e} for a token sequence of {c.src}->{c.dst}"
        booked.append((rf, tuple(times), tuple(lns)))
    return (templates, booked), None


def allocate_slots(rounded: Sequence[RoundedPathFlow], phi: int, lanes: Sequence[int]) -> PeriodicSchedule:
    """Greedy earliest-slot allocation of ``slots`` token sequences per rounded path."""
    order = []
    # (commodity, path index, replica) order
    by_c: dict[Commodity, list[RoundedPathFlow]] = {}
    for rf in rounded:
        by_c.setdefault(rf.commodity, []).append(rf)
    for c in sorted(by_c):
        for rf in by_c[c]:
            order += [(rf, r) for r in range(rf.slots)]
    result, err = _greedy(order, phi, lanes)
    if result is None:
        retry = sorted(order, key=lambda item: -len(item[0].path))
        result, err2 = _greedy(retry, phi, lanes)
        if result is None:
            raise SchedulingError(f"greedy allocation failed: {err}; retry: {err2}")
    templates, booked = result

    # final ids: by commodity, then departure slot, then first-hop lane
    ranked = sorted(range(len(booked)),
                    key=lambda i: (booked[i][0].commodity, booked[i][1][0], booked[i][2][0], i))
    new_id = {old: new for new, old in enumerate(ranked)}
    for table in templates.values():
        for row in table:
            for ln, v in enumerate(row):
                if v is not None:
                    row[ln] = new_id[v]
    seqs = [TokenSequence(new_id[i], booked[i][0].commodity, booked[i][0].path, booked[i][1],
                          booked[i][2], phi) for i in ranked]
    sched = PeriodicSchedule(phi, list(lanes), dict(sorted(templates.items())), seqs)
    sched.reorder_gaps = compute_reorder_gaps(sched)
    return sched


@dataclass
class ScheduleReport:
    ok: bool
    failures: list[str] = field(default_factory=list)


def validate_schedule(schedule: PeriodicSchedule, graph: NocGraph | None = None,
                      rounded: Sequence[RoundedPathFlow] | None = None) -> ScheduleReport:
    phi = schedule.phi
    failures = []
    claimed: dict[tuple[int, int, int], int] = {}
    through = [0] * len(schedule.lanes)
    for s in schedule.sequences:
        if len(s.times) != len(s.path) or len(s.lanes) != len(s.path):
            failures.append(f"sequence {s.id}: hop list does not match its path")
            continue
        if graph is not None:
            try:
                nodes = graph.path_nodes(s.path)
                if nodes[0] != s.commodity.src or nodes[-1] != s.commodity.dst:
                    failures.append(f"sequence {s.id}: path does not join its endpoints")
            except ValueError:
                failures.append(f"sequence {s.id}: path is not a walk")
        if not 0 <= s.times[0] < phi:
            failures.append(f"sequence {s.id}: departure slot {s.times[0]} outside the period")
        for a, b in zip(s.times, s.times[1:]):
            if b < a + 1:
                failures.append(f"sequence {s.id}: hop at {b} does not follow hop at {a}")
            elif b - a > phi:
                failures.append(f"sequence {s.id}: waits {b - a - 1} slots (> {phi - 1})")
        for e, t, ln in zip(s.path, s.times, s.lanes):
            through[e] += 1
            if not 0 <= ln < schedule.lanes[e]:
                failures.append(f"sequence {s.id}: lane {ln} out of range on edge {e}")
                continue
            key = (e, t % phi, ln)
            if key in claimed:
                failures.append(f"double booking of edge {e} slot {t % phi} lane {ln} "
                                f"by sequences {claimed[key]} and {s.id}")
            claimed[key] = s.id
            table = schedule.templates.get(e)
            if table is None or table[t % phi][ln] != s.id:
                failures.append(f"sequence {s.id}: template of edge {e} does not record its token")
    for e, table in schedule.templates.items():
        if len(table) != phi:
            failures.append(f"template of edge {e} has {len(table)} rows, expected {phi}")
        for slot, row in enumerate(table):
            for ln, v in enumerate(row):
                if v is not None and claimed.get((e, slot, ln)) != v:
                    failures.append(f"double booking: edge {e} slot {slot} lane {ln} lists sequence {v} "
                                    "which does not own it")
    for e, n in enumerate(through):
        if n > phi * schedule.lanes[e]:
            failures.append(f"edge {e}: {n} token sequences exceed capacity {phi * schedule.lanes[e]}")
    if rounded is not None:
        want: dict[Commodity, int] = {}
        for rf in rounded:
            want[rf.commodity] = want.get(rf.commodity, 0) + rf.slots
        have = {c: len(v) for c, v in schedule.by_commodity().items()}
        for c in sorted(set(want) | set(have)):
            if want.get(c, 0) != have.get(c, 0):
                failures.append(f"commodity {c.src}->{c.dst}: {have.get(c, 0)} token sequences, "
                                f"rounded demand needs {want.get(c, 0)}")
    for c, seqs in schedule.by_commodity().items():
        ts = [s.t for s in sorted(seqs, key=lambda s: s.id)]
        if ts != sorted(ts):
            failures.append(f"commodity {c.src}->{c.dst}: sequences not ordered by departure")
    return ScheduleReport(not failures, failures)


def rounded_to_list(rounded: Sequence[RoundedPathFlow]) -> list[dict]:
    return [{**_commodity_dict(rf.commodity), "path": list(rf.path), "slots": rf.slots, "phi": rf.phi}
            for rf in rounded]


def rounded_from_list(items: Sequence[dict]) -> list[RoundedPathFlow]:
    return [RoundedPathFlow(_commodity_from(d), tuple(d["path"]), int(d["slots"]), int(d["phi"]))
            for d in items]
