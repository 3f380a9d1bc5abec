"""Basic floor-planning used to estimate interconnection lengths."""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .graph import NocGraph

MAX_ITER = 1000
TOL = 1e-6


def pe_grid(n_pes: int) -> list[tuple[float, float]]:
    side = math.ceil(math.sqrt(n_pes))
    return [(float(i % side), float(i // side)) for i in range(n_pes)]


def floorplan(graph: NocGraph, pe_positions=None) -> tuple[list[tuple[float, float]], NocGraph]:
    """Place PEs on a square grid and relax switches to the mean of their neighbours.

    Returns the placement (one position per node id) and a copy of ``graph``
    whose edge costs are the Euclidean lengths.  Meshes keep their tile
    positions, so inter-switch links have unit length.
    """
    if graph.topology.startswith("mesh") and graph.positions is not None:
        pos = np.asarray(graph.positions, dtype=float)
    else:
        pos = _relax(graph, pe_positions)
    placement = [(float(x), float(y)) for x, y in pos]
    edges = [replace(e, cost=float(math.hypot(*(pos[e.src] - pos[e.dst])))) for e in graph.edges]
    out = graph.with_edges(edges)
    out.positions = placement
    return placement, out


def _relax(graph: NocGraph, pe_positions) -> np.ndarray:
    pes = graph.pes
    if pe_positions is None:
        pe_positions = pe_grid(len(pes))
    pos = np.zeros((graph.n_nodes, 2))
    for p, xy in zip(pes, pe_positions):
        pos[p] = xy
    switches = graph.switches
    if not switches:
        return pos
    centroid = pos[pes].mean(axis=0) if pes else np.zeros(2)
    nbrs = [graph.neighbors(s) for s in switches]
    for s, nb in zip(switches, nbrs):
        attached = [v for v in nb if graph.is_pe(v)]
        pos[s] = pos[attached].mean(axis=0) if attached else centroid

    # Jacobi sweeps; PE anchors make this a contraction per component
    for _ in range(MAX_ITER):
        new = pos.copy()
        for s, nb in zip(switches, nbrs):
            if nb:
                new[s] = pos[nb].mean(axis=0)
        moved = float(np.max(np.abs(new - pos)))
        pos = new
        if moved < TOL:
            break
    return pos
