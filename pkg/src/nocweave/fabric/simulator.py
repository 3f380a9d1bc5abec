"""Slot-accurate execution of compiled control tables.

Switch memories hold opaque flit handles.  Forwarding and merging use only
the static tables: a switch never looks at what it stores, and a destination
NI identifies the token sequence of an arriving flit from its arrival slot
and lane.  The handle is used purely to log measurements (injection time,
intended sequence, payload) so the report can be checked against the
schedule.
"""
from __future__ import annotations

import csv
import heapq
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import fmean

import numpy as np

from ..demands import DemandMatrix
from ..errors import SimulationError
from ..graph import NocGraph
from ..tcg import Tcg, TimingSpec
from .controls import Controls


@dataclass(frozen=True)
class Steady:
    """Every session receives ``bw * phi`` flits at the start of each period."""

    demands: DemandMatrix


@dataclass(frozen=True)
class TcgReplay:
    tcg: Tcg
    spec: TimingSpec
    flit_bits: int


@dataclass
class SimReport:
    phi: int
    horizon: int
    window: tuple[int, int]
    latencies: list[int]
    edge_utilization: list[Fraction]
    max_occupancy: dict[int, int]  # switch -> flits
    capacity: dict[int, int]  # switch -> phi * din cells
    task_ends: dict[int, int]
    wire_cost: Fraction
    memory_bits: int
    memory_bits_reuse: int
    flit_bits: int
    utilization: Fraction
    total_edge_utilization: Fraction
    injected: int
    delivered: int
    in_flight: int
    order_violations: int = 0
    latency_mismatches: int = 0
    misroutes: int = 0
    predicted: list[int] = field(default_factory=list)  # D of the sequence each delivered flit used

    @property
    def drops(self) -> int:
        return self.injected - self.delivered - self.in_flight

    @property
    def avg_latency(self) -> float:
        return fmean(self.latencies) if self.latencies else 0.0

    @property
    def max_latency(self) -> int:
        return max(self.latencies, default=0)

    def summary(self) -> dict:
        return {
            "phi": self.phi,
            "horizon": self.horizon,
            "window": list(self.window),
            "injected": self.injected,
            "delivered": self.delivered,
            "in_flight": self.in_flight,
            "drops": self.drops,
            "order_violations": self.order_violations,
            "latency_mismatches": self.latency_mismatches,
            "misroutes": self.misroutes,
            "avg_latency": self.avg_latency,
            "max_latency": self.max_latency,
            "utilization": str(self.utilization),
            "edge_utilization": str(self.total_edge_utilization),
            "wire_cost": str(self.wire_cost),
            "memory_bits": self.memory_bits,
            "memory_bits_reuse": self.memory_bits_reuse,
            "max_occupancy_bits": {str(v): n * self.flit_bits for v, n in sorted(self.max_occupancy.items())},
            "task_ends": {str(u): t for u, t in sorted(self.task_ends.items())},
        }

    def dumps(self) -> str:
        return json.dumps(self.summary(), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        """One row per metric class: count, mean, min, max."""
        rows = [
            ("latency_slots", self.latencies),
            ("edge_utilization", [float(u) for u in self.edge_utilization]),
            ("occupancy_bits", [n * self.flit_bits for _, n in sorted(self.max_occupancy.items())]),
            ("task_end_slot", [t for _, t in sorted(self.task_ends.items())]),
        ]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "count", "mean", "min", "max"])
        for name, vals in rows:
            if vals:
                w.writerow([name, len(vals), repr(float(fmean(vals))), min(vals), max(vals)])
            else:
                w.writerow([name, 0, "", "", ""])
        return buf.getvalue()


class _Fabric:
    """Flattened control tables: global lane ids, memory cells and per-phase actions."""

    def __init__(self, graph: NocGraph, controls: Controls):
        phi = controls.phi
        self.phi = phi
        lanes = controls.lanes
        self.link_of: dict[tuple[int, int], int] = {}
        link_edge = []
        for e, n in enumerate(lanes):
            for ln in range(n):
                self.link_of[(e, ln)] = len(link_edge)
                link_edge.append(e)
        self.link_edge = np.array(link_edge, dtype=np.int64)
        n_links = len(link_edge)

        self.base, cell_owner = {}, []
        for v in sorted(controls.switches):
            sw = controls.switches[v]
            self.base[v] = len(cell_owner)
            cell_owner += [v] * (phi * sw.din)
        self.switch_ids = sorted(controls.switches)
        self.cell_switch = np.searchsorted(self.switch_ids, np.array(cell_owner, dtype=np.int64)) \
            if cell_owner else np.zeros(0, dtype=np.int64)
        self.n_cells = len(cell_owner)

        # writes: a flit on a switch-bound lane in slot t lands in cell wbase + (t % phi) * stride
        self.wbase = np.full(n_links, -1, dtype=np.int64)
        self.wstride = np.zeros(n_links, dtype=np.int64)
        self.to_pe = np.zeros(n_links, dtype=bool)
        for (e, ln), lk in self.link_of.items():
            v = graph.edges[e].dst
            if v in controls.switches:
                sw = controls.switches[v]
                self.wbase[lk] = self.base[v] + sw.columns[(e, ln)]
                self.wstride[lk] = sw.din
            else:
                self.to_pe[lk] = True

        reads = [([], []) for _ in range(phi)]
        for v in self.switch_ids:
            sw = controls.switches[v]
            for (e, ln), table in sorted(sw.controls.items()):
                for r, addr in enumerate(table):
                    if addr is not None:
                        row, col = addr
                        reads[r][0].append(self.base[v] + row * sw.din + col)
                        reads[r][1].append(self.link_of[(e, ln)])
        self.read_cells = [np.array(c, dtype=np.int64) for c, _ in reads]
        self.read_links = [np.array(lk, dtype=np.int64) for _, lk in reads]

        # sessions in canonical (src, dst) order
        self.sessions: list[tuple[int, int]] = []
        for p in sorted(controls.nis):
            for d in sorted(controls.nis[p].tx):
                self.sessions.append((p, d))
        self.session_of = {s: i for i, s in enumerate(self.sessions)}
        self.inject: list[list[tuple[int, int, int]]] = [[] for _ in range(phi)]
        for p in sorted(controls.nis):
            ni = controls.nis[p]
            for d, entries in sorted(ni.tx.items()):
                for slot, ln, sid in entries:
                    self.inject[slot].append((self.link_of[(ni.tx_edge, ln)], self.session_of[(p, d)], sid))
        for lst in self.inject:
            lst.sort()

        # receive side: (link, slot) -> (session, seq, D, t, release offset, rank)
        self.rx: dict[tuple[int, int], tuple[int, int, int, int, int, int]] = {}
        self.seq_D: dict[int, int] = {}
        for p in sorted(controls.nis):
            ni = controls.nis[p]
            sess_of_seq = {}
            for src, srx in ni.rx.items():
                for rank, sid in enumerate(srx.order):
                    sess_of_seq[sid] = (self.session_of[(src, p)], srx, rank)
                    self.seq_D[sid] = srx.D[sid]
            for (slot, ln), sid in ni.rx_table.items():
                sess, srx, rank = sess_of_seq[sid]
                self.rx[(self.link_of[(ni.rx_edge, ln)], slot)] = (
                    sess, sid, srx.D[sid], srx.t[sid], srx.release[sid], rank)
        self.n_seq = len(self.seq_D)
        self.warm = phi * math.ceil(max((srx.t[s] + srx.D[s] for ni in controls.nis.values()
                                         for srx in ni.rx.values() for s in srx.order), default=0) / phi)


def simulate(graph: NocGraph, controls: Controls, traffic: Steady | TcgReplay | None = None,
             horizon: int | None = None) -> SimReport:
    fab = _Fabric(graph, controls)
    phi = fab.phi
    steady = not isinstance(traffic, TcgReplay)
    if steady:
        if horizon is None:
            horizon = fab.warm + 3 * phi
        if horizon < 2 * phi:
            raise SimulationError(f"horizon {horizon} is shorter than two periods")
    n_links = len(fab.link_edge)
    mem = np.full(fab.n_cells, -1, dtype=np.int64)
    queues = [deque() for _ in fab.sessions]
    merge: list[list] = [[] for _ in fab.sessions]
    pending: set[int] = set()
    released_last = [-1] * len(fab.sessions)

    # measurement log, indexed by flit handle
    f_time: list[int] = []
    f_seq: list[int] = []
    f_payload: list[int] = []
    latencies, predicted = [], []
    order_violations = mismatches = misroutes = 0
    occupancy = np.zeros(len(fab.switch_ids), dtype=np.int64)
    busy = np.zeros(n_links, dtype=np.int64)

    replay = None if steady else _Replay(traffic, fab)
    if steady:
        per_period = _steady_quota(fab, traffic, phi)
        window = _steady_window(fab, horizon, phi)
    delivered_in_window = 0
    delivered = 0

    t = 0
    while True:
        if steady:
            if t >= horizon:
                break
            if t % phi == 0:
                ell = t // phi
                for sess, quota in per_period:
                    n = math.floor((ell + 1) * quota) - math.floor(ell * quota)
                    queues[sess].extend([-1] * n)
        # merge: release in-order flits whose release slot has come
        for sess in sorted(pending):
            heap = merge[sess]
            while heap and heap[0][0] <= t:
                _, _, _, fid = heapq.heappop(heap)
                if fid < released_last[sess]:
                    order_violations += 1
                released_last[sess] = fid
                if replay is not None:
                    replay.flit_released(f_payload[fid], t)
            if not heap:
                pending.discard(sess)
        if replay is not None:
            replay.step(t, queues)
            if replay.done and t >= replay.min_horizon:
                break
            if t > replay.limit:
                raise SimulationError(f"task replay did not finish by slot {replay.limit}")

        r = t % phi
        out = np.full(n_links, -1, dtype=np.int64)
        cells = fab.read_cells[r]
        if len(cells):
            out[fab.read_links[r]] = mem[cells]
            mem[cells] = -1
        for link, sess, sid in fab.inject[r]:
            q = queues[sess]
            if q:
                out[link] = len(f_time)
                f_time.append(t)
                f_seq.append(sid)
                f_payload.append(q.popleft())
        active = np.flatnonzero(out >= 0)
        if len(active):
            if steady and window[0] <= t < window[1]:
                busy[active] += 1
            elif not steady:
                busy[active] += 1
            sw_links = active[~fab.to_pe[active]]
            if len(sw_links):
                dst = fab.wbase[sw_links] + r * fab.wstride[sw_links]
                if np.any(mem[dst] >= 0):
                    bad = int(dst[np.flatnonzero(mem[dst] >= 0)[0]])
                    raise SimulationError(f"slot {t}: flit in cell {bad} overwritten before it was forwarded")
                mem[dst] = out[sw_links]
            for link in active[fab.to_pe[active]]:
                fid = int(out[link])
                arrival = t + 1
                sess, sid, D, t0, rel, rank = fab.rx[(int(link), r)]
                delivered += 1
                lat = arrival - f_time[fid]
                latencies.append(lat)
                predicted.append(D)
                if sid != f_seq[fid]:
                    misroutes += 1
                if lat != D:
                    mismatches += 1
                if steady and window[0] <= arrival < window[1]:
                    delivered_in_window += 1
                depart = arrival - D
                release = depart - t0 + rel
                heapq.heappush(merge[sess], (release, depart, rank, fid))
                pending.add(sess)
        if fab.n_cells:
            live = np.bincount(fab.cell_switch[mem >= 0], minlength=len(fab.switch_ids))
            np.maximum(occupancy, live, out=occupancy)
        t += 1

    if steady:
        horizon_used = horizon
        w0, w1 = window
    else:
        horizon_used = t
        w0, w1 = 0, t
        delivered_in_window = delivered
    span = w1 - w0
    if span > 0 and fab.n_seq:
        utilization = Fraction(delivered_in_window * phi, span * fab.n_seq)
    else:
        utilization = Fraction(0)
    lanes = controls.lanes
    edge_busy = np.bincount(fab.link_edge, weights=busy, minlength=len(lanes)) if n_links else np.zeros(len(lanes))
    edge_util = [Fraction(int(b), span * n) if n and span > 0 else Fraction(0) for b, n in zip(edge_busy, lanes)]
    total_lanes = sum(lanes)
    total_util = Fraction(int(busy.sum()), span * total_lanes) if total_lanes and span > 0 else Fraction(0)

    k = graph.flit_bits
    wire = sum((Fraction(e.cost).limit_denominator(1 << 30) * n * k for e, n in zip(graph.edges, lanes)), Fraction(0))
    sw = controls.switches
    return SimReport(
        phi=phi, horizon=horizon_used, window=(w0, w1), latencies=latencies, edge_utilization=edge_util,
        max_occupancy={v: int(occupancy[i]) for i, v in enumerate(fab.switch_ids)},
        capacity={v: sw[v].memory_cells() for v in fab.switch_ids},
        task_ends=dict(replay.ends) if replay is not None else {},
        wire_cost=wire,
        memory_bits=sum(s.memory_cells() for s in sw.values()) * k,
        memory_bits_reuse=sum(s.reduced_cells() for s in sw.values()) * k,
        flit_bits=k, utilization=utilization, total_edge_utilization=total_util,
        injected=len(f_time), delivered=delivered, in_flight=int((mem >= 0).sum()),
        order_violations=order_violations, latency_mismatches=mismatches, misroutes=misroutes,
        predicted=predicted,
    )


def _steady_quota(fab: _Fabric, traffic: Steady | None, phi: int) -> list[tuple[int, Fraction]]:
    if traffic is None:
        return []
    out = []
    for (i, j), bw in sorted(traffic.demands.bw.items()):
        if bw <= 0:
            continue
        if (i, j) not in fab.session_of:
            raise SimulationError(f"session {i}->{j} has demand but no scheduled slots")
        out.append((fab.session_of[(i, j)], bw * phi))
    return out


def _steady_window(fab: _Fabric, horizon: int, phi: int) -> tuple[int, int]:
    """Whole periods after every sequence has completed its first trip."""
    periods = (horizon - fab.warm) // phi
    if periods < 1:
        return 0, horizon
    return fab.warm, fab.warm + periods * phi


class _Replay:
    """Tasks run one at a time per PE in a fixed order: specification start, then topological index."""

    def __init__(self, traffic: TcgReplay, fab: _Fabric):
        tcg, spec = traffic.tcg, traffic.spec
        self.tasks = tcg.by_id
        self.mapping = tcg.mapping
        topo = {u: i for i, u in enumerate(tcg.topological_order())}
        self.order: dict[int, deque] = {}
        for u in sorted(self.tasks, key=lambda u: (spec.start(u), topo[u])):
            self.order.setdefault(self.mapping[u], deque()).append(u)
        self.messages = tcg.messages
        self.inbound: dict[int, list[int]] = {u: [] for u in self.tasks}
        self.outbound: dict[int, list[int]] = {u: [] for u in self.tasks}
        for mi, m in enumerate(self.messages):
            self.inbound[m.dst].append(mi)
            self.outbound[m.src].append(mi)
        self.flits = [math.ceil(m.bits / traffic.flit_bits) for m in self.messages]
        self.remaining = list(self.flits)
        self.arrived: dict[int, int] = {}
        self.running: dict[int, tuple[int, int]] = {}  # pe -> (task, end slot)
        self.ends: dict[int, int] = {}
        self.fab = fab
        self.min_horizon = math.ceil(spec.makespan)
        self.limit = 4 * self.min_horizon + 16 * fab.phi * max(1, len(self.tasks))

    @property
    def done(self) -> bool:
        return len(self.ends) == len(self.tasks)

    def flit_released(self, mi: int, t: int):
        self.remaining[mi] -= 1
        if self.remaining[mi] == 0:
            self.arrived[mi] = t

    def _ready(self, u: int, t: int) -> bool:
        if not self.inbound[u]:
            a = self.tasks[u].arrival
            return a is not None and a <= t
        return all(mi in self.arrived for mi in self.inbound[u])

    def _finish(self, u: int, t: int, queues):
        self.ends[u] = t
        for mi in self.outbound[u]:
            m = self.messages[mi]
            i, j = self.mapping[m.src], self.mapping[m.dst]
            if i == j or self.flits[mi] == 0:
                self.arrived[mi] = t
                continue
            sess = self.fab.session_of.get((i, j))
            if sess is None:
                raise SimulationError(f"message {m.src}->{m.dst} needs session {i}->{j}, which has no slots")
            queues[sess].extend([mi] * self.flits[mi])

    def step(self, t: int, queues):
        for pe in sorted(self.order.keys() | self.running.keys()):
            while True:
                if pe in self.running:
                    u, end = self.running[pe]
                    if end > t:
                        break
                    del self.running[pe]
                    self._finish(u, end, queues)
                todo = self.order.get(pe)
                if not todo or not self._ready(todo[0], t):
                    break
                u = todo.popleft()
                self.running[pe] = (u, t + self.tasks[u].duration)
