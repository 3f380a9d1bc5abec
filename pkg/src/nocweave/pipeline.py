"""Staged toolchain: every stage reads its inputs from and writes its outputs to one directory."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path

from .demands import DemandMatrix, gen_random_demands, reduce_tcg, utilization_bound
from .errors import ConfigError, NocweaveError, StageError
from .fabric import Controls, SimReport, Steady, TcgReplay, emit_controls, simulate
from .floorplan import floorplan
from .graph import NocGraph
from .mcf import (commodities_from_demands, decompose, dumps_flow, flow_from_dict, solve_min_congestion,
                  solve_min_cost, verify_flow)
from .schedule import (PeriodicSchedule, allocate_slots, assign_widths, round_flows, rounded_from_list,
                       rounded_to_list, validate_schedule)
from .tcg import RtParams, Tcg, compute_lags, compute_spec, detect_drift, gen_random_tcg, parse_alpha, unroll
from .topology import generate_topology, parse_topology

log = logging.getLogger(__name__)

STAGES = ("gen", "demands", "solve", "round", "schedule", "emit", "sim", "report")

FILES = {
    "config": "config.json",
    "topology": "topology.json",
    "tcg": "tcg.json",
    "demands": "demands.json",
    "flow": "flow.json",
    "rounded": "rounded.json",
    "sized": "topology_sized.json",
    "schedule": "schedule.json",
    "controls": "controls.json",
    "sim": "sim.json",
    "sim_csv": "sim.csv",
    "report": "report.csv",
}

REPORT_COLUMNS = (
    "topology", "pes", "objective", "phi", "flit_bits", "wire_cost", "memory_bits", "memory_bits_reuse",
    "avg_latency", "max_latency", "utilization", "utilization_bound", "rounding_overhead_pct",
    "lag_sum", "lag_max", "drift",
)


@dataclass
class PipelineConfig:
    topology: str = "mesh:4x4"
    phi: int = 8
    flit_bits: int = 4
    objective: str = "mincong"
    eps: float = 0.02
    hop_limit: int | None = None
    L: int = 0
    alpha: str = "4"
    seed: int = 0
    horizon: int | None = None
    traffic: str = "random"  # "random" steady traffic or "tcg" replay
    tcg: str | None = None  # task graph file; a synthetic one is generated when absent
    tasks: int = 30
    iterations: int = 5
    max_flits: int = 5

    def validate(self) -> "PipelineConfig":
        if not isinstance(self.phi, int) or self.phi < 1:
            raise ConfigError(f"phi must be a positive integer, got {self.phi!r}")
        if self.flit_bits < 1:
            raise ConfigError("flit_bits must be positive")
        if self.objective not in ("mincost", "mincong"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if not 0 < self.eps <= 0.1:
            raise ConfigError("eps must lie in (0, 0.1]")
        if self.hop_limit is not None and self.hop_limit < 1:
            raise ConfigError("hop_limit must be positive")
        if self.L < 0:
            raise ConfigError("L must be non-negative")
        if self.traffic not in ("random", "tcg"):
            raise ConfigError(f"unknown traffic model {self.traffic!r}")
        if self.tcg is not None and not Path(self.tcg).is_file():
            raise ConfigError(f"task graph file {self.tcg} does not exist")
        if self.iterations < 1 or self.tasks < 1:
            raise ConfigError("iterations and tasks must be positive")
        if self.horizon is not None and self.horizon < 2 * self.phi:
            raise ConfigError("horizon must cover at least two periods")
        try:
            parse_topology(self.topology, self.seed)
            self.params
        except (ValueError, NocweaveError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    @property
    def params(self) -> RtParams:
        return RtParams(self.L, parse_alpha(self.alpha))

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**data)
        cfg.alpha = str(cfg.alpha)
        if cfg.tcg is not None and base is not None and not Path(cfg.tcg).is_absolute():
            cfg.tcg = str(base / cfg.tcg)
        return cfg

    @classmethod
    def load(cls, path: str | Path | None, **overrides) -> "PipelineConfig":
        data = {}
        base = None
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file {path} does not exist")
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
            base = path.parent
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data, base).validate()

    def dumps(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


def _write(out: Path, key: str, text: str):
    (out / FILES[key]).write_text(text if text.endswith("\n") else text + "\n")


def _read(out: Path, key: str) -> str:
    path = out / FILES[key]
    if not path.is_file():
        raise FileNotFoundError(f"missing artifact {path.name}; run the earlier stages first")
    return path.read_text()


def _graph(out: Path, key: str = "topology") -> NocGraph:
    return NocGraph.loads(_read(out, key))


def _replay_inputs(cfg: PipelineConfig, out: Path):
    base = Tcg.loads(_read(out, "tcg"))
    tcg, origin = unroll(base, cfg.iterations)
    return tcg, origin, compute_spec(tcg, cfg.params)


def stage_gen(cfg: PipelineConfig, out: Path):
    g = generate_topology(parse_topology(cfg.topology, cfg.seed), cfg.flit_bits)
    _, g = floorplan(g)
    _write(out, "topology", g.dumps())


def stage_demands(cfg: PipelineConfig, out: Path):
    g = _graph(out)
    if cfg.traffic == "random":
        dm = gen_random_demands(len(g.pes), cfg.seed, cfg.phi, cfg.max_flits, pes=g.pes)
    else:
        if cfg.tcg is not None:
            base = Tcg.loads(Path(cfg.tcg).read_text())
        else:
            base = gen_random_tcg(cfg.tasks, len(g.pes), cfg.seed, cfg.params, cfg.flit_bits, cfg.phi)
        bad = sorted(set(base.mapping.values()) - set(g.pes))
        if bad:
            raise ConfigError(f"task graph maps tasks to nodes {bad} that are not PEs")
        _write(out, "tcg", base.dumps())
        tcg, _, spec = _replay_inputs(cfg, out)
        dm, _ = reduce_tcg(tcg, cfg.params, spec, cfg.flit_bits)
    dm.phi = cfg.phi
    _write(out, "demands", dm.dumps())


def stage_solve(cfg: PipelineConfig, out: Path):
    g = _graph(out)
    dm = DemandMatrix.loads(_read(out, "demands"))
    commodities = commodities_from_demands(dm)
    if cfg.objective == "mincost":
        fa = solve_min_cost(g, commodities, cfg.hop_limit)
    else:
        # NI links carry the same load under every routing, so they do not enter the objective
        caps = [None if g.is_pe(e.src) or g.is_pe(e.dst) else 1 for e in g.edges]
        fa = solve_min_congestion(g, commodities, caps, cfg.eps, cfg.hop_limit)
    paths = decompose(g, fa)
    report = verify_flow(g, commodities, fa)
    if not report.ok:
        raise NocweaveError(f"flow verification failed: {report.first}")
    _write(out, "flow", dumps_flow(fa, paths))


def stage_round(cfg: PipelineConfig, out: Path):
    g = _graph(out)
    fa, paths = flow_from_dict(g, json.loads(_read(out, "flow")))
    rounded = round_flows(paths, cfg.phi, fa.commodities)
    _write(out, "rounded", json.dumps(rounded_to_list(rounded), indent=1))


def stage_schedule(cfg: PipelineConfig, out: Path):
    g = _graph(out)
    rounded = rounded_from_list(json.loads(_read(out, "rounded")))
    sized, lanes = assign_widths(g, rounded, cfg.flit_bits)
    schedule = allocate_slots(rounded, cfg.phi, lanes)
    rep = validate_schedule(schedule, sized, rounded)
    if not rep.ok:
        raise NocweaveError(f"schedule validation failed: {rep.failures[0]}")
    _write(out, "sized", sized.dumps())
    _write(out, "schedule", schedule.dumps())


def stage_emit(cfg: PipelineConfig, out: Path):
    sized = _graph(out, "sized")
    schedule = PeriodicSchedule.loads(_read(out, "schedule"))
    _write(out, "controls", emit_controls(schedule, sized).dumps())


def _simulate(cfg: PipelineConfig, out: Path) -> SimReport:
    sized = _graph(out, "sized")
    controls = Controls.loads(_read(out, "controls"))
    if cfg.traffic == "random":
        traffic = Steady(DemandMatrix.loads(_read(out, "demands")))
    else:
        tcg, _, spec = _replay_inputs(cfg, out)
        traffic = TcgReplay(tcg, spec, cfg.flit_bits)
    return simulate(sized, controls, traffic, cfg.horizon)


def stage_sim(cfg: PipelineConfig, out: Path):
    sim = _simulate(cfg, out)
    _write(out, "sim", sim.dumps())
    _write(out, "sim_csv", sim.to_csv())


@dataclass
class ReportTable:
    rows: list[dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow(row)
        return buf.getvalue()


def rounding_overhead(paths, rounded) -> Fraction:
    """Relative growth of edge-summed bandwidth caused by rounding path flows to slots."""
    frac = sum((pf.amount * len(pf.path) for pf in paths), Fraction(0))
    if frac == 0:
        return Fraction(0)
    return (sum((rf.amount * len(rf.path) for rf in rounded), Fraction(0)) - frac) / frac


def report(cfg: PipelineConfig, out: Path) -> ReportTable:
    """Assemble the summary row from persisted artifacts only."""
    g = _graph(out)
    sized = _graph(out, "sized")
    dm = DemandMatrix.loads(_read(out, "demands"))
    _, paths = flow_from_dict(g, json.loads(_read(out, "flow")))
    rounded = rounded_from_list(json.loads(_read(out, "rounded")))
    sim = json.loads(_read(out, "sim"))
    wire = sum((Fraction(e.cost).limit_denominator(1 << 30) * e.width_bits for e in sized.edges), Fraction(0))
    row = {
        "topology": cfg.topology,
        "pes": len(g.pes),
        "objective": cfg.objective,
        "phi": cfg.phi,
        "flit_bits": cfg.flit_bits,
        "wire_cost": _fmt(wire),
        "memory_bits": sim["memory_bits"],
        "memory_bits_reuse": sim["memory_bits_reuse"],
        "avg_latency": _fmt(sim["avg_latency"]),
        "max_latency": sim["max_latency"],
        "utilization": _fmt(Fraction(sim["utilization"])),
        "utilization_bound": _fmt(utilization_bound(dm)) if dm.bw else "",
        "rounding_overhead_pct": _fmt(100 * rounding_overhead(paths, rounded)),
        "lag_sum": "", "lag_max": "", "drift": "",
    }
    if cfg.traffic == "tcg":
        tcg, origin, spec = _replay_inputs(cfg, out)
        ends = {int(u): t for u, t in sim["task_ends"].items()}
        lags = compute_lags(spec, ends)
        row["lag_sum"] = _fmt(lags.sum_lag)
        row["lag_max"] = _fmt(lags.max_lag)
        if cfg.iterations >= 3:
            per = [Fraction(0)] * cfg.iterations
            for u, lag in lags.lags.items():
                per[origin[u][0]] += lag
            dr = detect_drift(per)
            row["drift"] = f"{dr.kind}:{_fmt(dr.slope)}"
    return ReportTable([row])


def stage_report(cfg: PipelineConfig, out: Path):
    _write(out, "report", report(cfg, out).to_csv())


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        x = float(x)
    return f"{x:.6g}"


RUNNERS = {
    "gen": stage_gen, "demands": stage_demands, "solve": stage_solve, "round": stage_round,
    "schedule": stage_schedule, "emit": stage_emit, "sim": stage_sim, "report": stage_report,
}


def run_stage(name: str, cfg: PipelineConfig, out: str | Path):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    log.info("stage %s", name)
    try:
        RUNNERS[name](cfg, out)
    except StageError:
        raise
    except (NocweaveError, ValueError, FileNotFoundError, KeyError) as exc:
        raise StageError(name, exc) from exc


@dataclass
class Artifacts:
    graph: NocGraph
    demands: DemandMatrix
    schedule: PeriodicSchedule
    controls: Controls
    sim: dict
    report: ReportTable


def run_pipeline(cfg: PipelineConfig, out: str | Path) -> Artifacts:
    cfg.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out, "config", cfg.dumps())
    for name in STAGES:
        run_stage(name, cfg, out)
    return Artifacts(
        graph=_graph(out, "sized"),
        demands=DemandMatrix.loads(_read(out, "demands")),
        schedule=PeriodicSchedule.loads(_read(out, "schedule")),
        controls=Controls.loads(_read(out, "controls")),
        sim=json.loads(_read(out, "sim")),
        report=report(cfg, out),
    )


def diameter(graph: NocGraph) -> int:
    """Largest PE-to-PE edge count over shortest paths where PEs do not relay."""
    best = 0
    for p in graph.pes:
        dist = {p: 0}
        frontier = [p]
        while frontier:
            nxt = []
            for v in frontier:
                if v != p and graph.is_pe(v):
                    continue
                for e in graph.out_edges(v):
                    w = graph.edges[e].dst
                    if w not in dist:
                        dist[w] = dist[v] + 1
                        nxt.append(w)
            frontier = nxt
        best = max([best] + [dist[q] for q in graph.pes if q in dist])
    return best


__all__ = [
    "FILES", "REPORT_COLUMNS", "STAGES", "Artifacts", "PipelineConfig", "ReportTable", "diameter",
    "report", "rounding_overhead", "run_pipeline", "run_stage",
]
