"""Path stripping: turn per-edge commodity flows into weighted paths."""
from __future__ import annotations

import heapq
from fractions import Fraction

from ..errors import ConservationError
from ..graph import NocGraph
from .model import Commodity, FlowAssignment, PathFlow


def _check_conservation(graph, c: Commodity, fc: dict[int, Fraction]):
    bal = {}
    for e, v in fc.items():
        if v < 0:
            raise ConservationError(f"{c.src}->{c.dst}: negative flow on edge {e}")
        edge = graph.edges[e]
        bal[edge.src] = bal.get(edge.src, 0) - v
        bal[edge.dst] = bal.get(edge.dst, 0) + v
    for v, b in sorted(bal.items()):
        expected = -c.demand if v == c.src else c.demand if v == c.dst else 0
        if b != expected:
            raise ConservationError(f"{c.src}->{c.dst}: imbalance {b} at node {v}, expected {expected}")


def _find_cycle(graph, fc):
    """Return the edge list of some cycle in the support, or None."""
    out = {}
    for e in sorted(fc):
        out.setdefault(graph.edges[e].src, []).append(e)
    state = {}
    for root in sorted(out):
        if state.get(root):
            continue
        stack = [(root, iter(out.get(root, ())))]
        trail = []  # edges along the current DFS path
        state[root] = 1
        while stack:
            v, it = stack[-1]
            e = next(it, None)
            if e is None:
                state[v] = 2
                stack.pop()
                if trail:
                    trail.pop()
                continue
            w = graph.edges[e].dst
            if state.get(w) == 1:
                cyc = [e]
                for f in reversed(trail):
                    cyc.append(f)
                    if graph.edges[f].src == w:
                        break
                return cyc[::-1]
            if not state.get(w):
                state[w] = 1
                trail.append(e)
                stack.append((w, iter(out.get(w, ()))))
    return None


def cancel_cycles(graph: NocGraph, fc: dict[int, Fraction]) -> dict[int, Fraction]:
    fc = {e: v for e, v in fc.items() if v > 0}
    while True:
        cyc = _find_cycle(graph, fc)
        if cyc is None:
            return fc
        amt = min(fc[e] for e in cyc)
        for e in cyc:
            fc[e] -= amt
            if fc[e] == 0:
                del fc[e]


def _widest(graph, fc, src, dst):
    """Largest bottleneck of any src-dst path in the support (None if unreachable)."""
    out = {}
    for e in fc:
        out.setdefault(graph.edges[e].src, []).append(e)
    width = {}
    heap = [(float("-inf"), src)]
    while heap:
        neg, v = heapq.heappop(heap)
        if v in width:
            continue
        width[v] = -neg
        for e in out.get(v, ()):
            w = graph.edges[e].dst
            if w not in width:
                heapq.heappush(heap, (-min(-neg, fc[e]), w))
    return width.get(dst)


def _lexicographic_path(graph, fc, src, dst, bottleneck):
    usable = [e for e, v in fc.items() if v >= bottleneck]
    rev = {}
    for e in usable:
        rev.setdefault(graph.edges[e].dst, []).append(graph.edges[e].src)
    reach, stack = {dst}, [dst]
    while stack:
        v = stack.pop()
        for u in rev.get(v, ()):
            if u not in reach:
                reach.add(u)
                stack.append(u)
    out = {}
    for e in usable:
        out.setdefault(graph.edges[e].src, []).append(e)
    path, v = [], src
    while v != dst:
        e = min((e for e in out[v] if graph.edges[e].dst in reach), key=lambda e: graph.edges[e].dst)
        path.append(e)
        v = graph.edges[e].dst
    return tuple(path)


def decompose_commodity(graph: NocGraph, c: Commodity, fc: dict[int, Fraction]) -> list[PathFlow]:
    _check_conservation(graph, c, fc)
    fc = cancel_cycles(graph, fc)
    paths = []
    remaining = c.demand
    while remaining > 0:
        b = _widest(graph, fc, c.src, c.dst)
        if b is None:
            raise ConservationError(f"{c.src}->{c.dst}: flow left without a path")
        b = min(b, remaining)
        path = _lexicographic_path(graph, fc, c.src, c.dst, b)
        paths.append(PathFlow(c, path, b))
        for e in path:
            fc[e] -= b
            if fc[e] == 0:
                del fc[e]
        remaining -= b
    return paths


def decompose(graph: NocGraph, flow: FlowAssignment) -> list[PathFlow]:
    """Maximum-bottleneck path stripping after cycle cancellation."""
    out = []
    for c, fc in zip(flow.commodities, flow.flows):
        out += decompose_commodity(graph, c, fc)
    return out
