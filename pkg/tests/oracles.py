"""Independent reference solvers used only by the test suite."""
from fractions import Fraction

import numpy as np
from cvxopt import matrix, solvers

from nocweave.graph import NocGraph
from nocweave.mcf import Commodity

solvers.options["show_progress"] = False
solvers.options["glpk"] = {"msg_lev": "GLP_MSG_OFF"}


def simple_paths(graph: NocGraph, src: int, dst: int, hop_limit=None):
    """Every simple edge path from ``src`` to ``dst`` whose interior avoids PEs."""
    out = []

    def walk(v, seen, path):
        if v == dst:
            out.append(tuple(path))
            return
        if hop_limit is not None and len(path) == hop_limit:
            return
        if v != src and graph.is_pe(v):
            return
        for e in graph.out_edges(v):
            w = graph.edges[e].dst
            if w not in seen:
                walk(w, seen | {w}, path + [e])

    walk(src, {src}, [])
    return out


def min_cost(graph: NocGraph, commodities, hop_limit=None) -> Fraction:
    total = Fraction(0)
    for c in commodities:
        paths = simple_paths(graph, c.src, c.dst, hop_limit)
        total += c.demand * min(sum(Fraction(graph.edges[e].cost) for e in p) for p in paths)
    return total


def min_congestion(graph: NocGraph, commodities, capacities, hop_limit=None) -> float:
    """Optimal lambda of the path LP: min lambda s.t. demands routed, load(e) <= lambda u(e)."""
    cols = [(k, p) for k, c in enumerate(commodities) for p in simple_paths(graph, c.src, c.dst, hop_limit)]
    used = sorted({e for _, p in cols for e in p})
    n, K = len(cols) + 1, len(commodities)
    cost = np.zeros(n)
    cost[-1] = 1.0
    # one row per used edge, then non-negativity of every path flow
    G = np.zeros((len(used) + n - 1, n))
    row = {e: r for r, e in enumerate(used)}
    for j, (k, p) in enumerate(cols):
        for e in p:
            G[row[e], j] += 1.0
    for e in used:
        G[row[e], -1] = -float(capacities[e])
    G[len(used):, :-1] = -np.eye(n - 1)
    h = np.zeros(len(G))
    A = np.zeros((K, n))
    b = np.array([float(c.demand) for c in commodities])
    for j, (k, _) in enumerate(cols):
        A[k, j] = 1.0
    sol = solvers.lp(matrix(cost), matrix(G), matrix(h), matrix(A), matrix(b), solver="glpk")
    assert sol["status"] == "optimal", sol["status"]
    return float(sol["x"][-1])


def small_suite(count=40, seed=7):
    """Fixed random instances: at most 6 nodes and 3 commodities, unit-or-small capacities."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(3, 7))
        n_pes = int(rng.integers(2, min(n, 4) + 1))
        links = [(a, b) for a in range(n) for b in range(n) if a != b and rng.random() < 0.45]
        graph = NocGraph.build(n_pes, n - n_pes, links)
        pairs = [(a, b) for a in range(n_pes) for b in range(n_pes) if a != b]
        pick = rng.choice(len(pairs), size=min(len(pairs), int(rng.integers(1, 4))), replace=False)
        comms = [Commodity(*pairs[i], Fraction(int(rng.integers(1, 5)), 2)) for i in sorted(pick)]
        if any(not simple_paths(graph, c.src, c.dst) for c in comms):
            continue
        caps = [int(rng.integers(1, 4)) for _ in graph.edges]
        hop = None if rng.random() < 0.6 else max(min(len(p) for p in simple_paths(graph, c.src, c.dst))
                                                   for c in comms) + int(rng.integers(0, 2))
        out.append((graph, comms, caps, hop))
    return out
