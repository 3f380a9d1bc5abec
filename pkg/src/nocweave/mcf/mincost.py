"""Minimum-cost routing: an overlay of (hop-limited) shortest paths."""
from __future__ import annotations

import heapq
from fractions import Fraction
from typing import Sequence

from ..errors import InfeasibleError
from ..graph import NocGraph
from .model import Commodity, FlowAssignment, PathFlow, path_cost

INF_KEY = (Fraction(10**30), 10**9)


def _add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def distances_to(graph: NocGraph, target: int, costs: Sequence[Fraction]) -> list:
    """Reverse Dijkstra on keys ``(cost, hops)``; PEs other than ``target`` never relay."""
    dist = [INF_KEY] * graph.n_nodes
    dist[target] = (Fraction(0), 0)
    heap = [(dist[target], target)]
    done = [False] * graph.n_nodes
    while heap:
        key, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        if v != target and graph.is_pe(v):
            continue
        for e in graph.in_edges(v):
            u = graph.edges[e].src
            cand = _add((costs[e], 1), key)
            if cand < dist[u]:
                dist[u] = cand
                heapq.heappush(heap, (cand, u))
    return dist


def layered_distances_to(graph: NocGraph, target: int, costs: Sequence[Fraction], hops: int) -> list[list]:
    """``table[h][v]``: best ``(cost, hops)`` from ``v`` to ``target`` using at most ``h`` edges."""
    n = graph.n_nodes
    cur = [INF_KEY] * n
    cur[target] = (Fraction(0), 0)
    table = [cur]
    for _ in range(hops):
        nxt = list(cur)
        for e, edge in enumerate(graph.edges):
            w = edge.dst
            if cur[w] == INF_KEY or (w != target and graph.is_pe(w)):
                continue
            cand = _add((costs[e], 1), cur[w])
            if cand < nxt[edge.src]:
                nxt[edge.src] = cand
        table.append(nxt)
        cur = nxt
    return table


def _edge_cost(graph):
    return [Fraction(e.cost) for e in graph.edges]


def lexicographic_path(graph: NocGraph, c: Commodity, costs, dist=None, table=None) -> tuple[int, ...]:
    """Walk tight edges choosing the smallest next node id."""
    v, path = c.src, []
    budget = len(table) - 1 if table is not None else None
    best = table[budget][v] if table is not None else dist[v]
    if best == INF_KEY:
        raise InfeasibleError(f"commodity {c.src}->{c.dst} has no path"
                              + (f" within {budget} hops" if budget is not None else ""))
    while v != c.dst:
        choice = None
        for e in graph.out_edges(v):
            w = graph.edges[e].dst
            if w != c.dst and graph.is_pe(w):
                continue
            rest = table[budget - 1][w] if table is not None else dist[w]
            if rest == INF_KEY:
                continue
            if _add((costs[e], 1), rest) == best and (choice is None or w < choice[1]):
                choice = (e, w)
        e, w = choice
        path.append(e)
        best = table[budget - 1][w] if table is not None else dist[w]
        if budget is not None:
            budget -= 1
        v = w
    return tuple(path)


def shortest_paths(graph: NocGraph, commodities: Sequence[Commodity], hop_limit: int | None = None,
                   costs=None) -> dict[Commodity, tuple[int, ...]]:
    costs = _edge_cost(graph) if costs is None else costs
    out = {}
    for t in sorted({c.dst for c in commodities}):
        if hop_limit is None:
            dist, table = distances_to(graph, t, costs), None
        else:
            dist, table = None, layered_distances_to(graph, t, costs, hop_limit)
        for c in commodities:
            if c.dst == t:
                out[c] = lexicographic_path(graph, c, costs, dist, table)
    return out


def solve_min_cost(graph: NocGraph, commodities: Sequence[Commodity], hop_limit: int | None = None) -> FlowAssignment:
    """Route every commodity on one minimum-cost path.

    Ties are broken by fewer hops, then by the lexicographically smallest
    node sequence.
    """
    if hop_limit is not None and hop_limit < 1:
        raise InfeasibleError("hop limit must be positive")
    routes = shortest_paths(graph, commodities, hop_limit)
    paths = [PathFlow(c, routes[c], c.demand) for c in commodities]
    total = sum((c.demand * path_cost(graph, routes[c]) for c in commodities), Fraction(0))
    return FlowAssignment.from_paths(graph, commodities, paths, "cost", total, hop_limit)
