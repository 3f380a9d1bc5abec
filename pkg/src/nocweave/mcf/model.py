from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from ..demands import DemandMatrix
from ..graph import NocGraph


@dataclass(frozen=True, order=True)
class Commodity:
    src: int
    dst: int
    demand: Fraction

    def __post_init__(self):
        object.__setattr__(self, "demand", Fraction(self.demand))
        if self.src == self.dst:
            raise ValueError("commodity endpoints must differ")
        if self.demand <= 0:
            raise ValueError("commodity demand must be positive")


def commodities_from_demands(dm: DemandMatrix) -> list[Commodity]:
    return [Commodity(i, j, v) for (i, j), v in sorted(dm.bw.items()) if v > 0]


@dataclass(frozen=True)
class PathFlow:
    commodity: Commodity
    path: tuple[int, ...]
    amount: Fraction


@dataclass
class FlowAssignment:
    """Per-commodity edge flows; ``flows[c]`` maps edge index to amount."""

    commodities: list[Commodity]
    flows: list[dict[int, Fraction]]
    n_edges: int
    objective: str = "cost"  # "cost" or "lambda"
    value: Fraction = Fraction(0)
    hop_limit: int | None = None
    paths: list[PathFlow] | None = field(default=None, repr=False)
    lower_bound: float | None = None

    def total(self) -> list[Fraction]:
        tot = [Fraction(0)] * self.n_edges
        for fc in self.flows:
            for e, v in fc.items():
                tot[e] += v
        return tot

    @classmethod
    def from_paths(cls, graph: NocGraph, commodities: Sequence[Commodity], paths: Sequence[PathFlow],
                   objective: str, value: Fraction, hop_limit=None) -> "FlowAssignment":
        index = {c: i for i, c in enumerate(commodities)}
        flows = [dict() for _ in commodities]
        for pf in paths:
            fc = flows[index[pf.commodity]]
            for e in pf.path:
                fc[e] = fc.get(e, Fraction(0)) + pf.amount
        return cls(list(commodities), flows, len(graph.edges), objective, value, hop_limit, list(paths))


def congestion(graph: NocGraph, flow: FlowAssignment, capacities: Sequence) -> Fraction:
    lam = Fraction(0)
    for e, f in enumerate(flow.total()):
        if f:
            lam = max(lam, f / Fraction(capacities[e]))
    return lam


def path_cost(graph: NocGraph, path: Sequence[int]) -> Fraction:
    return sum((Fraction(graph.edges[e].cost) for e in path), Fraction(0))


@dataclass
class FlowReport:
    ok: bool
    failures: list[str] = field(default_factory=list)

    @property
    def first(self) -> str | None:
        return self.failures[0] if self.failures else None


def verify_flow(graph: NocGraph, commodities: Sequence[Commodity], flow: FlowAssignment) -> FlowReport:
    """Conservation, demand satisfaction, non-negativity and hop limit checks."""
    failures = []
    if len(flow.flows) != len(commodities):
        return FlowReport(False, ["flow does not cover every commodity"])
    for c, fc in zip(commodities, flow.flows):
        bal = [Fraction(0)] * graph.n_nodes
        for e, v in fc.items():
            if v < 0:
                failures.append(f"{c.src}->{c.dst}: negative flow on edge {e}")
                continue
            edge = graph.edges[e]
            bal[edge.src] -= v
            bal[edge.dst] += v
        for v in range(graph.n_nodes):
            if v in (c.src, c.dst) or bal[v] == 0:
                continue
            failures.append(f"{c.src}->{c.dst}: conservation violated at node {v} (imbalance {bal[v]})")
        if -bal[c.src] != c.demand:
            failures.append(f"{c.src}->{c.dst}: source emits {-bal[c.src]}, demand {c.demand}")
        elif bal[c.dst] != c.demand:
            failures.append(f"{c.src}->{c.dst}: sink absorbs {bal[c.dst]}, demand {c.demand}")
    if flow.hop_limit is not None and flow.paths is not None:
        for pf in flow.paths:
            if len(pf.path) > flow.hop_limit:
                c = pf.commodity
                failures.append(f"{c.src}->{c.dst}: path of {len(pf.path)} hops exceeds limit {flow.hop_limit}")
    return FlowReport(not failures, failures)


def flow_to_dict(flow: FlowAssignment, paths: Sequence[PathFlow]) -> dict:
    per = []
    by_c: dict[Commodity, list[PathFlow]] = {}
    for pf in paths:
        by_c.setdefault(pf.commodity, []).append(pf)
    for c in flow.commodities:
        per.append({"src": c.src, "dst": c.dst, "demand": str(c.demand),
                    "paths": [{"path": list(pf.path), "amount": str(pf.amount)} for pf in by_c.get(c, [])]})
    return {flow.objective: str(flow.value), "hop_limit": flow.hop_limit, "commodities": per}


def flow_from_dict(graph: NocGraph, data: dict) -> tuple[FlowAssignment, list[PathFlow]]:
    objective = "lambda" if "lambda" in data else "cost"
    commodities, paths = [], []
    for entry in data["commodities"]:
        c = Commodity(int(entry["src"]), int(entry["dst"]), Fraction(entry["demand"]))
        commodities.append(c)
        paths += [PathFlow(c, tuple(p["path"]), Fraction(p["amount"])) for p in entry["paths"]]
    fa = FlowAssignment.from_paths(graph, commodities, paths, objective, Fraction(data[objective]),
                                   data.get("hop_limit"))
    return fa, paths


def dumps_flow(flow: FlowAssignment, paths: Sequence[PathFlow]) -> str:
    return json.dumps(flow_to_dict(flow, paths), indent=1)
