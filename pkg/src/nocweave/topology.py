"""Parameterised topology generators.

Indirect networks (Clos, Benes, k-ary n-fly) are built in their terminal-merged
form: the switch that a PE injects into is also the switch that delivers to
it, so every PE hangs off exactly one switch through its NI link.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConstructionError
from .graph import Edge, NocGraph, NodeKind


@dataclass(frozen=True)
class Mesh:
    rows: int
    cols: int


@dataclass(frozen=True)
class Clos3:
    """Folded 3-stage Clos: ``r`` edge switches with ``n`` PEs each, ``m`` middle switches."""
    m: int
    n: int
    r: int


@dataclass(frozen=True)
class Benes:
    n: int


@dataclass(frozen=True)
class KaryNfly:
    k: int
    n: int


@dataclass(frozen=True)
class RandomMatchings:
    n: int
    seed: int = 0


TopologyKind = Union[Mesh, Clos3, Benes, KaryNfly, RandomMatchings]


def parse_topology(text: str, seed: int = 0) -> TopologyKind:
    """Parse ``mesh:4x4``, ``clos3:4,4,4``, ``benes:16``, ``kary:2,4``, ``random:16``."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    try:
        if name == "mesh":
            r, c = arg.lower().split("x")
            return Mesh(int(r), int(c))
        nums = [int(x) for x in arg.split(",")] if arg else []
        if name == "clos3":
            return Clos3(*nums)
        if name == "benes":
            return Benes(*nums)
        if name in ("kary", "karynfly"):
            return KaryNfly(*nums)
        if name in ("random", "randommatchings"):
            return RandomMatchings(nums[0], nums[1] if len(nums) > 1 else seed)
    except (ValueError, TypeError) as exc:
        raise ConstructionError(f"bad topology description {text!r}: {exc}") from None
    raise ConstructionError(f"unknown topology {text!r}")


def generate_topology(kind: TopologyKind, flit_bits: int = 4) -> NocGraph:
    if flit_bits <= 0:
        raise ConstructionError("flit size must be positive")
    if isinstance(kind, Mesh):
        g = _mesh(kind, flit_bits)
    elif isinstance(kind, Clos3):
        g = _clos3(kind, flit_bits)
    elif isinstance(kind, Benes):
        g = _benes(kind, flit_bits)
    elif isinstance(kind, KaryNfly):
        g = _kary_nfly(kind, flit_bits)
    elif isinstance(kind, RandomMatchings):
        g = _random_matchings(kind, flit_bits)
    else:
        raise ConstructionError(f"unsupported topology {kind!r}")
    g.check()
    return g


def _assemble(n_pes, n_switches, attach, links, flit_bits, name):
    kinds = [NodeKind.PE] * n_pes + [NodeKind.SWITCH] * n_switches
    edges = []
    for p in range(n_pes):
        s = attach(p)
        edges.append(Edge(p, s))
        edges.append(Edge(s, p))
    edges.extend(Edge(a, b) for a, b in links)
    return NocGraph(kinds, edges, flit_bits=flit_bits, topology=name)


def _mesh(kind: Mesh, flit_bits: int) -> NocGraph:
    r, c = kind.rows, kind.cols
    if r < 1 or c < 1 or r * c < 2:
        raise ConstructionError("mesh needs at least two tiles")
    n = r * c
    kinds = [NodeKind.PE] * n + [NodeKind.SWITCH] * n
    pos = [(float(i % c), float(i // c)) for i in range(n)]
    edges = []
    for i in range(n):
        s = n + i
        # NI and switch share a tile
        edges.append(Edge(i, s, 0.0))
        edges.append(Edge(s, i, 0.0))
        row, col = divmod(i, c)
        if col + 1 < c:
            edges += [Edge(s, s + 1, 1.0), Edge(s + 1, s, 1.0)]
        if row + 1 < r:
            edges += [Edge(s, s + c, 1.0), Edge(s + c, s, 1.0)]
    return NocGraph(kinds, edges, flit_bits=flit_bits, positions=pos + pos,
                    topology=f"mesh{r}x{c}")


def _clos3(kind: Clos3, flit_bits: int) -> NocGraph:
    m, n, r = kind.m, kind.n, kind.r
    if m < 1 or n < 1 or r < 1 or n * r < 2:
        raise ConstructionError("Clos3 parameters must be positive with at least two PEs")
    if r == 1 and n < 2:
        raise ConstructionError("Clos3 cannot connect a single PE")
    n_pes = n * r
    edge0 = n_pes
    mid0 = n_pes + r
    links = []
    for e in range(r):
        for k in range(m):
            links += [(edge0 + e, mid0 + k), (mid0 + k, edge0 + e)]
    return _assemble(n_pes, r + m, lambda p: edge0 + p // n, links, flit_bits, f"clos3_{m}_{n}_{r}")


def _log2(n: int) -> int:
    if n < 2 or n & (n - 1):
        raise ConstructionError(f"Benes size must be a power of two >= 2, got {n}")
    return n.bit_length() - 1


def _benes(kind: Benes, flit_bits: int) -> NocGraph:
    n = kind.n
    lg = _log2(n)
    half = n // 2
    n_stages = 2 * lg - 1
    # stage 0 and the last stage are the same (terminal) switches
    def sw(stage, j):
        if stage == 0 or stage == n_stages - 1:
            return n + j
        return n + half * stage + j

    n_switches = half * max(1, n_stages - 1)
    links = []
    for s in range(n_stages - 1):
        bit = lg - 2 - s if s < lg - 1 else s - lg + 1
        for j in range(half):
            for t in (j, j ^ (1 << bit)):
                links.append((sw(s, j), sw(s + 1, t)))
    return _assemble(n, n_switches, lambda p: n + p // 2, links, flit_bits, f"benes{n}")


def _kary_nfly(kind: KaryNfly, flit_bits: int) -> NocGraph:
    k, n = kind.k, kind.n
    if k < 2 or n < 1:
        raise ConstructionError("k-ary n-fly needs k >= 2 and n >= 1")
    n_pes = k ** n
    width = k ** (n - 1)

    def sw(stage, j):
        return n_pes + width * (stage % n) + j

    links = []
    for s in range(n - 1):
        place = k ** (n - 2 - s)
        for j in range(width):
            digit = (j // place) % k
            for d in range(k):
                links.append((sw(s, j), sw(s + 1, j + (d - digit) * place)))
    if n > 1:
        for j in range(width):
            links.append((sw(n - 1, j), sw(0, j)))
    return _assemble(n_pes, width * n, lambda p: n_pes + p // k, links, flit_bits, f"kary{k}fly{n}")


def _components(nodes, adj):
    comps, seen = [], set()
    for v in nodes:
        if v in seen:
            continue
        comp, stack = set(), [v]
        seen.add(v)
        while stack:
            x = stack.pop()
            comp.add(x)
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        comps.append(comp)
    return comps


def _random_matchings(kind: RandomMatchings, flit_bits: int) -> NocGraph:
    n = kind.n
    if n < 2 or n % 2:
        raise ConstructionError("random matchings need an even number of PEs >= 2")
    rng = np.random.default_rng(kind.seed)
    und = set()
    for _ in range(2):
        perm = rng.permutation(n)
        for a, b in zip(perm[0::2], perm[1::2]):
            und.add((min(int(a), int(b)), max(int(a), int(b))))

    def adjacency(es):
        adj = {v: set() for v in range(n)}
        for a, b in es:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    # degree-preserving 2-swaps merge components; fall back to adding an edge
    while True:
        comps = _components(range(n), adjacency(und))
        if len(comps) == 1:
            break
        comps.sort(key=min)
        a_comp, b_comp = comps[0], comps[1]
        ea = min(e for e in und if e[0] in a_comp)
        eb = min(e for e in und if e[0] in b_comp)
        trial = (und - {ea, eb}) | {tuple(sorted((ea[0], eb[0]))), tuple(sorted((ea[1], eb[1])))}
        merged = a_comp | b_comp
        sub = _components(sorted(merged), {v: nb & merged for v, nb in adjacency(trial).items() if v in merged})
        if len(sub) == 1:
            und = trial
        else:
            und.add((min(a_comp), min(b_comp)))
    links = []
    for a, b in sorted(und):
        links += [(n + a, n + b), (n + b, n + a)]
    return _assemble(n, n, lambda p: n + p, links, flit_bits, f"random{n}_s{kind.seed}")
