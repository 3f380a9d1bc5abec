"""Minimum-congestion routing by path column generation.

A restricted path LP (minimise the common congestion factor over the known
paths) is solved repeatedly; its edge duals price new shortest paths.  Any
nonnegative edge weights certify a lower bound on the optimum (total
demand-weighted distance over total weighted capacity), so the solver stops
once the achieved congestion is within ``1 + eps`` of the best bound seen.

An optional exponential-weight phase (``mw_iters > 0``) routes commodities on
smoothed-congestion shortest paths first.  It tightens the initial bound but
seeds the LP with many columns, so it is off by default.
"""
from __future__ import annotations

import logging
import math
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.optimize import linprog
from scipy.sparse.csgraph import dijkstra

from ..errors import InfeasibleError
from ..graph import NocGraph
from .model import Commodity, FlowAssignment, PathFlow

log = logging.getLogger(__name__)

DEFAULT_EPS = 0.02


class _Router:
    """Shortest paths on a copy of the graph where PEs cannot relay traffic.

    Every PE keeps its out-edges at its own index and receives on a separate
    sink copy, so no path can enter and leave a PE.
    """

    def __init__(self, graph: NocGraph, hop_limit: int | None):
        self.graph = graph
        self.hop_limit = hop_limit
        n = graph.n_nodes
        self.sink = {p: n + k for k, p in enumerate(graph.pes)}
        self.size = n + len(self.sink)
        self.rows = np.array([e.src for e in graph.edges], dtype=np.int64)
        self.cols = np.array([self.sink.get(e.dst, e.dst) for e in graph.edges], dtype=np.int64)
        self.edge_of = {(int(r), int(c)): i for i, (r, c) in enumerate(zip(self.rows, self.cols))}

    def route(self, weights: np.ndarray, commodities: Sequence[Commodity]):
        """Return (paths, distances) for every commodity under ``weights``."""
        if self.hop_limit is not None:
            return self._route_layered(weights, commodities)
        mat = csr_matrix((weights, (self.rows, self.cols)), shape=(self.size, self.size))
        sources = sorted({c.src for c in commodities})
        dist, pred = dijkstra(mat, directed=True, indices=sources, return_predecessors=True)
        row = {s: k for k, s in enumerate(sources)}
        paths, dists = [], np.empty(len(commodities))
        for i, c in enumerate(commodities):
            r, t = row[c.src], self.sink[c.dst]
            if not np.isfinite(dist[r, t]):
                raise InfeasibleError(f"commodity {c.src}->{c.dst} is disconnected")
            dists[i] = dist[r, t]
            nodes = [t]
            while nodes[-1] != c.src:
                nodes.append(int(pred[r, nodes[-1]]))
            nodes.reverse()
            paths.append(tuple(self.edge_of[(a, b)] for a, b in zip(nodes, nodes[1:])))
        return paths, dists

    def _route_layered(self, weights, commodities):
        H = self.hop_limit
        paths, dists = [], np.empty(len(commodities))
        cache = {}
        for i, c in enumerate(commodities):
            if c.src not in cache:
                cache[c.src] = self._bellman_ford(weights, c.src, H)
            dist, pred = cache[c.src]
            t = self.sink[c.dst]
            h = int(np.argmin(dist[:, t]))
            if not np.isfinite(dist[h, t]):
                raise InfeasibleError(f"commodity {c.src}->{c.dst} has no path within {H} hops")
            dists[i] = dist[h, t]
            path, v = [], t
            while h > 0 and v != c.src:
                e = int(pred[h, v])
                path.append(e)
                v = int(self.rows[e])
                h -= 1
            paths.append(tuple(reversed(path)))
        return paths, dists

    def _bellman_ford(self, weights, src, H):
        dist = np.full((H + 1, self.size), np.inf)
        pred = np.full((H + 1, self.size), -1, dtype=np.int64)
        dist[0, src] = 0.0
        for h in range(1, H + 1):
            prev = dist[h - 1]
            cand = prev[self.rows] + weights
            best = np.full(self.size, np.inf)
            arg = np.full(self.size, -1, dtype=np.int64)
            # smallest candidate per head; ties keep the lowest edge index
            order = np.lexsort((np.arange(len(cand)), cand, self.cols))
            heads = self.cols[order]
            first = np.ones(len(order), dtype=bool)
            first[1:] = heads[1:] != heads[:-1]
            sel = order[first]
            best[self.cols[sel]] = cand[sel]
            arg[self.cols[sel]] = sel
            # exactly-h-edge walks; a walk may not revisit src
            best[src] = np.inf
            dist[h] = best
            pred[h] = arg
        return dist, pred


def _smooth_max(x: np.ndarray, eta: float) -> float:
    top = float(x.max())
    return top + math.log(float(np.exp(eta * (x - top)).sum())) / eta


def solve_min_congestion(graph: NocGraph, commodities: Sequence[Commodity], capacities: Sequence,
                         eps: float = DEFAULT_EPS, hop_limit: int | None = None,
                         mw_iters: int = 0, max_rounds: int = 200) -> FlowAssignment:
    """Fractional routing with congestion at most ``(1 + eps)`` times optimal.

    Starts from hop-weighted shortest paths (capacity-scaled), then adds
    dual-priced columns until the certificate closes.  A capacity of ``None``
    or ``inf`` leaves that edge out of the congestion objective.
    """
    if not 0 < eps <= 0.1:
        raise ValueError("eps must lie in (0, 0.1]")
    commodities = list(commodities)
    m = len(graph.edges)
    if not commodities:
        return FlowAssignment([], [], m, "lambda", Fraction(0), hop_limit, [], 0.0)
    u = np.array([math.inf if x is None else float(x) for x in capacities], dtype=float)
    if len(u) != m or np.any(u <= 0):
        raise ValueError("capacities must be positive on every edge")
    finite = np.isfinite(u)
    d = np.array([float(c.demand) for c in commodities])
    router = _Router(graph, hop_limit)

    def assign(paths):
        load = np.zeros(m)
        for p, amt in zip(paths, d):
            load[list(p)] += amt
        return load

    paths, _ = router.route(_priced(1.0 / u, finite), commodities)
    flows = [{p: 1.0} for p in paths]  # share of each demand per path
    load = assign(paths)
    best_dual = 0.0
    lam = float((load / u).max())
    converged = lam == 0.0  # nothing crosses a capacitated edge
    for it in range(0 if converged else mw_iters):
        cong = load / u
        lam = float(cong.max())
        eta = 2.0 * math.log(m + 1) / (eps * lam)
        w = np.exp(eta * (cong - lam)) / u
        new_paths, dist = router.route(_priced(w, finite), commodities)
        best_dual = max(best_dual, float(d @ dist) / float(w[finite] @ u[finite]))
        if lam <= (1 + eps) * best_dual:
            converged = True
            break
        target = assign(new_paths) / u
        gamma = _line_search(cong, target, eta)
        if gamma <= 0:
            gamma = 1.0 / (it + 2)
        load = (1 - gamma) * load + gamma * target * u
        for fc, p in zip(flows, new_paths):
            for q in fc:
                fc[q] *= 1 - gamma
            fc[p] = fc.get(p, 0.0) + gamma
    log.debug("exponential weights: lambda %.6g, bound %.6g", lam, best_dual)
    if not converged:
        flows, lam, best_dual = _column_generation(router, commodities, d, u, flows, best_dual, eps, max_rounds)

    path_flows = []
    for c, fc in zip(commodities, flows):
        kept = sorted((p, share) for p, share in fc.items() if share > 1e-12)
        shares = [Fraction(share).limit_denominator(1 << 40) for _, share in kept]
        norm = sum(shares, Fraction(0))
        # exact rescale so every demand is met exactly
        path_flows += [PathFlow(c, p, c.demand * s / norm) for (p, _), s in zip(kept, shares) if s]
    fa = FlowAssignment.from_paths(graph, commodities, path_flows, "lambda", Fraction(0), hop_limit)
    caps = {e: Fraction(float(u[e])) for e in np.flatnonzero(finite)}
    fa.value = max((f / caps[e] for e, f in enumerate(fa.total()) if f and e in caps), default=Fraction(0))
    fa.lower_bound = best_dual
    return fa


def _priced(w: np.ndarray, finite: np.ndarray) -> np.ndarray:
    """Routing weights; uncapacitated edges get a vanishing weight so paths stay short."""
    out = np.where(finite, w, 0.0)
    out[~finite] = _TINY
    return out


_TINY = 1e-12


def _column_generation(router, commodities, d, u, flows, best_dual, eps, max_rounds):
    m = len(u)
    finite = np.isfinite(u)
    columns: list[tuple[int, tuple[int, ...]]] = []
    seen = set()
    for ci, fc in enumerate(flows):
        for p in sorted(fc):
            columns.append((ci, p))
            seen.add((ci, p))
    lam = math.inf
    shares = None
    for rnd in range(max_rounds):
        lam, x, y, pi = _master(columns, len(commodities), d, u, m)
        shares = x
        if lam <= (1 + eps) * best_dual:
            break
        w = np.maximum(y, 0.0) + _TINY
        paths, dist = router.route(_priced(w, finite), commodities)
        denom = float(w[finite] @ u[finite])
        best_dual = max(best_dual, float(d @ dist) / denom)
        added = 0
        for ci, (p, dc) in enumerate(zip(paths, dist)):
            if dc < pi[ci] - 1e-9 and (ci, p) not in seen:
                columns.append((ci, p))
                seen.add((ci, p))
                added += 1
        if lam <= (1 + eps) * best_dual:
            break
        if not added:
            # no improving column: the master optimum is the true optimum
            best_dual = max(best_dual, lam)
            break
    log.debug("column generation: %d rounds, lambda %.6g, bound %.6g", rnd + 1, lam, best_dual)
    out = [dict() for _ in commodities]
    for (ci, p), xv in zip(columns, shares):
        if xv > 0:
            out[ci][p] = out[ci].get(p, 0.0) + xv / d[ci]
    return out, lam, best_dual


def _master(columns, n_comm, d, u, m):
    """min lambda s.t. demand rows, edge rows sum_p x_p - lambda*u_e <= 0 (capacitated edges only)."""
    n = len(columns)
    row_of = {e: i for i, e in enumerate(np.flatnonzero(np.isfinite(u)))}
    rows, cols, vals = [], [], []
    for j, (_, p) in enumerate(columns):
        for e in p:
            if e in row_of:
                rows.append(row_of[e])
                cols.append(j)
                vals.append(1.0)
    for e, r in row_of.items():
        rows.append(r)
        cols.append(n)
        vals.append(-u[e])
    k = len(row_of)
    A_ub = csr_matrix((vals, (rows, cols)), shape=(k, n + 1))
    A_eq = csr_matrix(([1.0] * n, ([ci for ci, _ in columns], list(range(n)))), shape=(n_comm, n + 1))
    c = np.zeros(n + 1)
    c[n] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=d,
                  bounds=[(0, None)] * (n + 1), method="highs")
    if res.status != 0:
        raise InfeasibleError(f"restricted path LP failed: {res.message}")
    y = np.zeros(m)
    for e, r in row_of.items():
        y[e] = -res.ineqlin.marginals[r]
    return float(res.x[n]), res.x[:n], y, res.eqlin.marginals


def _line_search(cur: np.ndarray, target: np.ndarray, eta: float, steps: int = 60) -> float:
    """Golden-section search of the smoothed maximum along ``cur -> target``."""
    lo, hi = 0.0, 1.0
    g = (math.sqrt(5) - 1) / 2
    a, b = hi - g * (hi - lo), lo + g * (hi - lo)
    fa = _smooth_max(cur + a * (target - cur), eta)
    fb = _smooth_max(cur + b * (target - cur), eta)
    for _ in range(steps):
        if fa <= fb:
            hi, b, fb = b, a, fa
            a = hi - g * (hi - lo)
            fa = _smooth_max(cur + a * (target - cur), eta)
        else:
            lo, a, fa = a, b, fb
            b = lo + g * (hi - lo)
            fb = _smooth_max(cur + b * (target - cur), eta)
    return (lo + hi) / 2
