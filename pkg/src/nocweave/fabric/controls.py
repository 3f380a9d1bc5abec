"""Compile a periodic schedule into header-free switch and NI control tables.

A switch with ``din`` incoming lanes owns a ``phi x din`` flit memory.  In
slot ``t`` every flit arriving on input column ``j`` is written to cell
``(t mod phi, j)``; each outgoing lane reads at most one cell per slot, as
dictated by its control function.  A read and a write of the same cell in the
same slot return the old contents.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from ..errors import CompilationError
from ..graph import NocGraph
from ..mcf.model import Commodity
from ..schedule import PeriodicSchedule


@dataclass
class SwitchConfig:
    node: int
    phi: int
    din: int
    columns: dict[tuple[int, int], int]  # (incoming edge, lane) -> memory column
    controls: dict[tuple[int, int], list[tuple[int, int] | None]]  # (out edge, lane) -> per-slot address
    residence: dict[tuple[int, int], int] = field(default_factory=dict)  # cell -> slots a flit stays

    def memory_cells(self) -> int:
        return self.phi * self.din

    def reduced_cells(self) -> int:
        """Cells needed when one-slot residents share a per-column register."""
        long_cells = sum(1 for r in self.residence.values() if r > 1)
        short_cols = {col for (row, col), r in self.residence.items() if r == 1}
        return long_cells + len(short_cols)


@dataclass
class SessionRx:
    """Destination-side view of one session: enough to merge without serial numbers."""

    commodity: Commodity
    order: list[int]  # token sequence ids in departure order
    t: dict[int, int]
    D: dict[int, int]
    gaps: list[int]
    release: dict[int, int]  # per sequence: release offset from the start of its departure period


@dataclass
class NiConfig:
    node: int
    phi: int
    tx: dict[int, list[tuple[int, int, int]]]  # dst PE -> [(slot, lane, seq id)] on the NI edge
    tx_edge: int | None
    rx: dict[int, SessionRx]  # src PE -> session receive state
    rx_table: dict[tuple[int, int], int]  # (slot, lane) on the incoming NI edge -> seq id
    rx_edge: int | None


@dataclass
class Controls:
    phi: int
    lanes: list[int]
    switches: dict[int, SwitchConfig]
    nis: dict[int, NiConfig]

    def to_dict(self) -> dict:
        sw = []
        for v in sorted(self.switches):
            s = self.switches[v]
            sw.append({
                "node": v, "din": s.din,
                "columns": [{"edge": e, "lane": ln, "column": c} for (e, ln), c in sorted(s.columns.items())],
                "controls": [{"edge": e, "lane": ln, "table": [None if a is None else list(a) for a in tbl]}
                             for (e, ln), tbl in sorted(s.controls.items())],
                "residence": [[row, col, r] for (row, col), r in sorted(s.residence.items())],
            })
        nis = []
        for p in sorted(self.nis):
            n = self.nis[p]
            arrivals = {sid: key for key, sid in n.rx_table.items()}
            nis.append({
                "node": p,
                "tx_edge": n.tx_edge,
                "tx": [{"dst": d, "slots": [list(x) for x in entries]} for d, entries in sorted(n.tx.items())],
                "rx_edge": n.rx_edge,
                "rx": [{"src": s, "demand": str(r.commodity.demand), "order": r.order,
                        "t": [r.t[i] for i in r.order], "D": [r.D[i] for i in r.order], "gaps": r.gaps,
                        "release": [r.release[i] for i in r.order],
                        "arrivals": [list(arrivals[i]) for i in r.order]} for s, r in sorted(n.rx.items())],
            })
        return {"phi": self.phi, "lanes": self.lanes, "switches": sw, "nis": nis}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "Controls":
        phi = int(data["phi"])
        switches = {}
        for s in data["switches"]:
            columns = {(c["edge"], c["lane"]): c["column"] for c in s["columns"]}
            controls = {(c["edge"], c["lane"]): [None if a is None else tuple(a) for a in c["table"]]
                        for c in s["controls"]}
            residence = {(row, col): r for row, col, r in s["residence"]}
            switches[s["node"]] = SwitchConfig(s["node"], phi, s["din"], columns, controls, residence)
        nis = {}
        for n in data["nis"]:
            tx = {d["dst"]: [tuple(x) for x in d["slots"]] for d in n["tx"]}
            rx, rx_table = {}, {}
            for r in n["rx"]:
                order = r["order"]
                rx[r["src"]] = SessionRx(Commodity(r["src"], n["node"], Fraction(r["demand"])), order,
                                         dict(zip(order, r["t"])), dict(zip(order, r["D"])), r["gaps"],
                                         dict(zip(order, r["release"])))
                for (slot, lane), sid in zip(r["arrivals"], order):
                    rx_table[(slot, lane)] = sid
            nis[n["node"]] = NiConfig(n["node"], phi, tx, n["tx_edge"], rx, rx_table, n["rx_edge"])
        return cls(phi, list(data["lanes"]), switches, nis)

    @classmethod
    def loads(cls, text: str) -> "Controls":
        return cls.from_dict(json.loads(text))


def release_offsets(phi: int, order: list[int], t: dict[int, int], D: dict[int, int]) -> dict[int, int]:
    """Earliest slot (relative to its period) at which a flit of each sequence may leave the merge.

    A flit departing at ``t_i`` is safe once every flit that departed before
    it, on any sequence of the session, has arrived.
    """
    rank = {sid: k for k, sid in enumerate(order)}
    out = {}
    for i in order:
        latest = t[i] + D[i]
        for j in order:
            dep = t[j] if (t[j], rank[j]) <= (t[i], rank[i]) else t[j] - phi
            latest = max(latest, dep + D[j])
        out[i] = latest
    return out


def emit_controls(schedule: PeriodicSchedule, graph: NocGraph) -> Controls:
    phi = schedule.phi
    switches: dict[int, SwitchConfig] = {}
    for v in graph.switches:
        columns, col = {}, 0
        for e in graph.in_edges(v):
            for ln in range(schedule.lanes[e]):
                columns[(e, ln)] = col
                col += 1
        controls = {}
        for e in graph.out_edges(v):
            for ln in range(schedule.lanes[e]):
                controls[(e, ln)] = [None] * phi
        switches[v] = SwitchConfig(v, phi, col, columns, controls)

    owner: dict[tuple[int, int, int], int] = {}
    for s in schedule.sequences:
        for k in range(len(s.path) - 1):
            e_in, e_out = s.path[k], s.path[k + 1]
            v = graph.edges[e_in].dst
            sw = switches.get(v)
            if sw is None:
                raise CompilationError(f"sequence {s.id} relays through non-switch node {v}")
            arrive, depart = s.times[k], s.times[k + 1]
            cell = (arrive % phi, sw.columns[(e_in, s.lanes[k])])
            if (v, *cell) in owner:
                raise CompilationError(f"sequences {owner[(v, *cell)]} and {s.id} share memory cell {cell} "
                                       f"of switch {v}")
            owner[(v, *cell)] = s.id
            table = sw.controls[(e_out, s.lanes[k + 1])]
            if table[depart % phi] is not None:
                raise CompilationError(f"control of edge {e_out} lane {s.lanes[k + 1]} slot {depart % phi} "
                                       "assigned twice")
            table[depart % phi] = cell
            sw.residence[cell] = depart - arrive

    nis: dict[int, NiConfig] = {}
    for p in graph.pes:
        outs, ins = graph.out_edges(p), graph.in_edges(p)
        nis[p] = NiConfig(p, phi, {}, outs[0] if len(outs) == 1 else None, {}, {},
                          ins[0] if len(ins) == 1 else None)
    for c, seqs in schedule.by_commodity().items():
        seqs = sorted(seqs, key=lambda s: s.id)
        src, dst = nis[c.src], nis[c.dst]
        if src.tx_edge is None or dst.rx_edge is None:
            raise CompilationError(f"session {c.src}->{c.dst}: each PE must attach through exactly one link")
        for s in seqs:
            src.tx.setdefault(c.dst, []).append((s.t % phi, s.lanes[0], s.id))
            last = s.times[-1] % phi, s.lanes[-1]
            if last in dst.rx_table:
                raise CompilationError(f"NI {c.dst}: slot {last} received twice")
            dst.rx_table[last] = s.id
        for entries in src.tx.values():
            entries.sort(key=lambda x: (x[0], x[2]))
        order = [s.id for s in seqs]
        t = {s.id: s.t for s in seqs}
        D = {s.id: s.D for s in seqs}
        dst.rx[c.src] = SessionRx(c, order, t, D, list(schedule.reorder_gaps.get(c, [])),
                                  release_offsets(phi, order, t, D))
    return Controls(phi, list(schedule.lanes), switches, nis)


def predict_latencies(schedule: PeriodicSchedule) -> dict[int, int]:
    """Network delay ``D`` of every token sequence."""
    return {s.id: s.D for s in schedule.sequences}
