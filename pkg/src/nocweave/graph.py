"""NoC graph model: processing elements, switches and directed interconnections."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from .errors import ConstructionError


class NodeKind(str, Enum):
    PE = "pe"
    SWITCH = "switch"


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    cost: float = 1.0
    width_bits: int = 0


@dataclass
class NocGraph:
    """Directed graph G = (P u V, E).

    Node ids are dense integers ``0..n-1``; ``kinds[i]`` tells whether node
    ``i`` is a PE or a switch.  Edges are kept in canonical ``(src, dst)``
    order and the position of an edge in ``edges`` is its index everywhere
    else in the toolchain (flows, templates, control tables).
    """

    kinds: list[NodeKind]
    edges: list[Edge]
    flit_bits: int = 4
    positions: list[tuple[float, float]] | None = None
    topology: str = "custom"

    _index: dict[tuple[int, int], int] = field(default=None, init=False, repr=False, compare=False)
    _out: list[list[int]] = field(default=None, init=False, repr=False, compare=False)
    _in: list[list[int]] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.flit_bits <= 0:
            raise ConstructionError("flit size must be positive")
        self.kinds = [NodeKind(k) for k in self.kinds]
        n = len(self.kinds)
        seen = {}
        for e in self.edges:
            if e.src == e.dst:
                raise ConstructionError(f"self-loop at node {e.src}")
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise ConstructionError(f"edge ({e.src},{e.dst}) references unknown node")
            if e.cost < 0:
                raise ConstructionError(f"negative cost on edge ({e.src},{e.dst})")
            if e.width_bits < 0:
                raise ConstructionError(f"negative width on edge ({e.src},{e.dst})")
            seen[(e.src, e.dst)] = e
        # parallel edges collapse into one; widths are sized later anyway
        self.edges = [seen[key] for key in sorted(seen)]
        self._index = {(e.src, e.dst): i for i, e in enumerate(self.edges)}
        self._out = [[] for _ in range(n)]
        self._in = [[] for _ in range(n)]
        for i, e in enumerate(self.edges):
            self._out[e.src].append(i)
            self._in[e.dst].append(i)

    @classmethod
    def build(cls, n_pes: int, n_switches: int, links: Iterable[tuple[int, int]],
              flit_bits: int = 4, topology: str = "custom", bidirectional: bool = False,
              cost: float = 1.0) -> "NocGraph":
        """PEs get ids ``0..n_pes-1``, switches follow."""
        kinds = [NodeKind.PE] * n_pes + [NodeKind.SWITCH] * n_switches
        edges = []
        for a, b in links:
            edges.append(Edge(a, b, cost))
            if bidirectional:
                edges.append(Edge(b, a, cost))
        return cls(kinds, edges, flit_bits=flit_bits, topology=topology)

    @property
    def n_nodes(self) -> int:
        return len(self.kinds)

    @property
    def pes(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k is NodeKind.PE]

    @property
    def switches(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k is NodeKind.SWITCH]

    def is_pe(self, v: int) -> bool:
        return self.kinds[v] is NodeKind.PE

    def edge_index(self, src: int, dst: int) -> int:
        return self._index[(src, dst)]

    def has_edge(self, src: int, dst: int) -> bool:
        return (src, dst) in self._index

    def out_edges(self, v: int) -> list[int]:
        return self._out[v]

    def in_edges(self, v: int) -> list[int]:
        return self._in[v]

    def neighbors(self, v: int) -> list[int]:
        """Undirected neighbourhood, sorted."""
        nb = {self.edges[i].dst for i in self._out[v]} | {self.edges[i].src for i in self._in[v]}
        return sorted(nb)

    def path_nodes(self, path: Sequence[int]) -> list[int]:
        if not path:
            return []
        nodes = [self.edges[path[0]].src]
        for i in path:
            e = self.edges[i]
            if e.src != nodes[-1]:
                raise ValueError(f"edge sequence {list(path)} is not a walk")
            nodes.append(e.dst)
        return nodes

    def with_edges(self, edges: list[Edge]) -> "NocGraph":
        return NocGraph(list(self.kinds), edges, flit_bits=self.flit_bits,
                        positions=None if self.positions is None else list(self.positions),
                        topology=self.topology)

    def with_widths(self, widths: Sequence[int]) -> "NocGraph":
        return self.with_edges([replace(e, width_bits=int(w)) for e, w in zip(self.edges, widths)])

    def reachable(self, src: int, transit_pes: bool = False) -> set[int]:
        """Nodes reachable from ``src``; PEs other than ``src`` are never transit nodes."""
        seen = {src}
        queue = deque([src])
        while queue:
            v = queue.popleft()
            if v != src and self.is_pe(v) and not transit_pes:
                continue
            for i in self._out[v]:
                w = self.edges[i].dst
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return seen

    def pes_strongly_connected(self) -> bool:
        pes = self.pes
        return all(set(pes) <= self.reachable(p) for p in pes)

    def check(self) -> None:
        """Raise unless every PE attaches to exactly one switch and PEs are mutually reachable."""
        for p in self.pes:
            outs = {self.edges[i].dst for i in self._out[p]}
            ins = {self.edges[i].src for i in self._in[p]}
            if len(outs) != 1 or outs != ins or self.is_pe(next(iter(outs))):
                raise ConstructionError(f"PE {p} must attach to exactly one switch")
        if not self.pes_strongly_connected():
            raise ConstructionError("PEs are not mutually reachable")

    def to_dict(self) -> dict:
        nodes = []
        for i, k in enumerate(self.kinds):
            node = {"id": i, "kind": k.value}
            if self.positions is not None:
                node["pos"] = [float(self.positions[i][0]), float(self.positions[i][1])]
            nodes.append(node)
        return {
            "flit_bits": self.flit_bits,
            "topology": self.topology,
            "nodes": nodes,
            "edges": [{"src": e.src, "dst": e.dst, "cost": float(e.cost), "width_bits": e.width_bits}
                      for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NocGraph":
        nodes = sorted(data["nodes"], key=lambda n: n["id"])
        if [n["id"] for n in nodes] != list(range(len(nodes))):
            raise ConstructionError("node ids must be dense")
        positions = None
        if nodes and all("pos" in n for n in nodes):
            positions = [tuple(n["pos"]) for n in nodes]
        edges = [Edge(e["src"], e["dst"], float(e["cost"]), int(e.get("width_bits", 0)))
                 for e in data["edges"]]
        return cls([n["kind"] for n in nodes], edges, flit_bits=int(data["flit_bits"]),
                   positions=positions, topology=data.get("topology", "custom"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "NocGraph":
        return cls.from_dict(json.loads(text))
