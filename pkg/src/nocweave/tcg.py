"""Task communication graphs and their parameterised real-time specification."""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import SpecError

INF = math.inf


@dataclass(frozen=True)
class Task:
    id: int
    duration: int
    arrival: int | None = None
    deadline: int | None = None


@dataclass(frozen=True)
class Message:
    src: int
    dst: int
    bits: int


def parse_alpha(value) -> Fraction | float:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return INF if math.isinf(value) else Fraction(value)
    text = str(value).strip().lower()
    if text in ("inf", "infinity", "oo"):
        return INF
    return Fraction(text)


@dataclass(frozen=True)
class RtParams:
    """Message delay bound ``L + |m|/alpha`` (slots); alpha in bits per slot."""

    L: int = 0
    alpha: Fraction | float = Fraction(4)

    def __post_init__(self):
        object.__setattr__(self, "alpha", parse_alpha(self.alpha))
        if self.L < 0:
            raise SpecError("L must be non-negative")
        if self.alpha != INF and self.alpha <= 0:
            raise SpecError("alpha must be positive")

    @property
    def finite(self) -> bool:
        return self.alpha != INF

    def transfer(self, bits: int) -> Fraction:
        """``|m|/alpha``; zero for an infinitely wide channel."""
        if not self.finite:
            return Fraction(0)
        return Fraction(bits) / self.alpha

    def delay(self, bits: int) -> Fraction:
        return self.L + self.transfer(bits)


@dataclass
class Tcg:
    tasks: list[Task]
    messages: list[Message]
    mapping: dict[int, int] = field(default_factory=dict)
    app_period: int | None = None

    def __post_init__(self):
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise SpecError("duplicate task id")
        known = set(ids)
        for m in self.messages:
            if m.src not in known or m.dst not in known:
                raise SpecError(f"message {m.src}->{m.dst} references an unknown task")
            if m.bits <= 0:
                raise SpecError(f"message {m.src}->{m.dst} must have positive length")
        for t in self.tasks:
            if t.duration < 0:
                raise SpecError(f"task {t.id} has negative duration")

    @property
    def by_id(self) -> dict[int, Task]:
        return {t.id: t for t in self.tasks}

    def incoming(self) -> dict[int, list[Message]]:
        inc = {t.id: [] for t in self.tasks}
        for m in self.messages:
            inc[m.dst].append(m)
        return inc

    def outgoing(self) -> dict[int, list[Message]]:
        out = {t.id: [] for t in self.tasks}
        for m in self.messages:
            out[m.src].append(m)
        return out

    def sources(self) -> list[int]:
        inc = self.incoming()
        return sorted(u for u, ms in inc.items() if not ms)

    def topological_order(self) -> list[int]:
        """Kahn's algorithm, smallest id first among ready tasks."""
        indeg = {t.id: 0 for t in self.tasks}
        out = self.outgoing()
        for m in self.messages:
            indeg[m.dst] += 1
        ready = [u for u, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            u = heapq.heappop(ready)
            order.append(u)
            for m in out[u]:
                indeg[m.dst] -= 1
                if indeg[m.dst] == 0:
                    heapq.heappush(ready, m.dst)
        if len(order) != len(self.tasks):
            raise SpecError("task graph contains a cycle")
        return order

    def to_dict(self) -> dict:
        tasks = []
        for t in sorted(self.tasks, key=lambda t: t.id):
            d = {"id": t.id, "duration": t.duration}
            if t.arrival is not None:
                d["arrival"] = t.arrival
            if t.deadline is not None:
                d["deadline"] = t.deadline
            tasks.append(d)
        out = {
            "tasks": tasks,
            "messages": [{"src": m.src, "dst": m.dst, "bits": m.bits} for m in self.messages],
            "mapping": {str(k): v for k, v in sorted(self.mapping.items())},
        }
        if self.app_period is not None:
            out["app_period"] = self.app_period
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Tcg":
        tasks = [Task(int(t["id"]), int(t["duration"]), t.get("arrival"), t.get("deadline"))
                 for t in data["tasks"]]
        messages = [Message(int(m["src"]), int(m["dst"]), int(m["bits"])) for m in data["messages"]]
        mapping = {int(k): int(v) for k, v in data.get("mapping", {}).items()}
        return cls(tasks, messages, mapping, data.get("app_period"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "Tcg":
        return cls.from_dict(json.loads(text))


@dataclass
class TimingSpec:
    end: dict[int, Fraction]
    params: RtParams
    durations: dict[int, int] = field(default_factory=dict)
    deadlines: dict[int, Fraction] = field(default_factory=dict)

    def start(self, task_id: int) -> Fraction:
        return self.end[task_id] - self.durations.get(task_id, 0)

    @property
    def makespan(self) -> Fraction:
        return max(self.end.values(), default=Fraction(0))

    def end_slot(self, task_id: int) -> int:
        return math.ceil(self.end[task_id])

    def feasible(self) -> bool:
        return all(self.end[u] <= d for u, d in self.deadlines.items())


def compute_spec(tcg: Tcg, params: RtParams) -> TimingSpec:
    """End time of every task under the hypothetical delay-bounded network."""
    order = tcg.topological_order()
    tasks = tcg.by_id
    inc = tcg.incoming()
    end: dict[int, Fraction] = {}
    for u in order:
        t = tasks[u]
        if not inc[u]:
            if t.arrival is None:
                raise SpecError(f"source task {u} has no arrival time")
            end[u] = Fraction(t.arrival) + t.duration
        else:
            ready = max(end[m.src] + params.delay(m.bits) for m in inc[u])
            end[u] = ready + t.duration
    sinks = {u for u, ms in tcg.outgoing().items() if not ms}
    deadlines = {}
    for u in sinks:
        d = tasks[u].deadline
        deadlines[u] = Fraction(d) if d is not None else end[u]
    return TimingSpec(end, params, {t.id: t.duration for t in tcg.tasks}, deadlines)


@dataclass
class LagReport:
    lags: dict[int, Fraction]
    sum_lag: Fraction
    max_lag: Fraction

    @property
    def violations(self) -> list[int]:
        return sorted(u for u, lag in self.lags.items() if lag > 0)


def compute_lags(spec: TimingSpec, observed: Mapping[int, int | Fraction]) -> LagReport:
    lags = {}
    for u in sorted(spec.end):
        if u not in observed:
            raise SpecError(f"no observed end time for task {u}")
        lags[u] = Fraction(observed[u]) - spec.end[u]
    if not lags:
        return LagReport({}, Fraction(0), Fraction(0))
    return LagReport(lags, sum(lags.values(), Fraction(0)), max(lags.values()))


DRIFT_SLOPE_TOL = Fraction(1, 100)


@dataclass(frozen=True)
class DriftResult:
    kind: str  # "none" | "bounded" | "drift"
    slope: Fraction


def detect_drift(lags: Sequence) -> DriftResult:
    """Least-squares slope of lag against instance index."""
    if len(lags) < 3:
        raise SpecError("drift detection needs at least 3 instances")
    ys = [Fraction(y) for y in lags]
    n = len(ys)
    xbar = Fraction(n - 1, 2)
    ybar = sum(ys, Fraction(0)) / n
    sxy = sum(((i - xbar) * (y - ybar) for i, y in enumerate(ys)), Fraction(0))
    sxx = sum(((i - xbar) ** 2 for i in range(n)), Fraction(0))
    slope = sxy / sxx
    if abs(slope) > DRIFT_SLOPE_TOL:
        return DriftResult("drift", slope)
    if all(y == ys[0] for y in ys):
        return DriftResult("none", slope)
    return DriftResult("bounded", slope)


def unroll(tcg: Tcg, iterations: int, app_period: int | None = None) -> tuple[Tcg, dict[int, tuple[int, int]]]:
    """Repeat the task graph; instance ``i`` of task ``u`` gets id ``i*stride + u``.

    Returns the unrolled graph and a map from new id to ``(iteration, original id)``.
    """
    period = tcg.app_period if app_period is None else app_period
    if iterations > 1 and period is None:
        raise SpecError("unrolling needs an application period")
    stride = max((t.id for t in tcg.tasks), default=-1) + 1
    tasks, messages, mapping, origin = [], [], {}, {}
    for i in range(iterations):
        shift = i * (period or 0)
        for t in tcg.tasks:
            nid = i * stride + t.id
            origin[nid] = (i, t.id)
            arrival = None if t.arrival is None else t.arrival + shift
            deadline = None if t.deadline is None else t.deadline + shift
            tasks.append(Task(nid, t.duration, arrival, deadline))
            if t.id in tcg.mapping:
                mapping[nid] = tcg.mapping[t.id]
        messages += [Message(i * stride + m.src, i * stride + m.dst, m.bits) for m in tcg.messages]
    return Tcg(tasks, messages, mapping, period), origin


def gen_random_tcg(n_tasks: int, n_pes: int, seed: int, params: RtParams, flit_bits: int = 4,
                   phi: int = 8, max_width: int | None = None, burst: int = 4) -> Tcg:
    """Layered random DAG with bursty message sizes and a conflict-free mapping.

    Tasks are placed greedily so that no two tasks sharing a PE have
    overlapping specification windows; the application period is a multiple
    of ``phi`` no shorter than one iteration's makespan.
    """
    if n_tasks < 1 or n_pes < 2:
        raise SpecError("need at least one task and two PEs")
    width_cap = max_width or max(1, n_pes // 2)
    for attempt in range(100):
        rng = np.random.default_rng([seed, attempt])
        layers, left = [], n_tasks
        while left:
            w = int(min(left, rng.integers(1, width_cap + 1)))
            layers.append(list(range(n_tasks - left, n_tasks - left + w)))
            left -= w
        tasks, messages = [], []
        for li, layer in enumerate(layers):
            for u in layer:
                dur = int(rng.integers(1, 9))
                if li == 0:
                    tasks.append(Task(u, dur, arrival=int(rng.integers(0, 4))))
                    continue
                tasks.append(Task(u, dur))
                pool = [v for prev in layers[max(0, li - 2):li] for v in prev]
                n_par = int(min(len(pool), rng.integers(1, 4)))
                for v in sorted(int(x) for x in rng.choice(pool, size=n_par, replace=False)):
                    flits = int(rng.integers(1, 9))
                    if rng.random() < 0.2:
                        flits *= burst
                    messages.append(Message(v, u, flits * flit_bits))
        tcg = Tcg(tasks, messages)
        spec = compute_spec(tcg, params)
        mapping = _conflict_free_mapping(tcg, spec, n_pes, rng)
        if mapping is None:
            continue
        span = spec.makespan
        period = (math.ceil(span / phi) + 1) * phi
        return Tcg(tasks, messages, mapping, period)
    raise SpecError("could not find a conflict-free mapping")


def _conflict_free_mapping(tcg, spec, n_pes, rng):
    busy_until = [Fraction(-1)] * n_pes
    mapping = {}
    for u in sorted(spec.end, key=lambda u: (spec.start(u), u)):
        start = spec.start(u)
        free = [p for p in range(n_pes) if busy_until[p] <= start]
        if not free:
            return None
        p = int(free[int(rng.integers(0, len(free)))])
        mapping[u] = p
        busy_until[p] = spec.end[u]
    return mapping
