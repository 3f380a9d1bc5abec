from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from nocweave.demands import gen_random_demands
from nocweave.errors import SchedulingError
from nocweave.graph import NocGraph
from nocweave.mcf import Commodity, PathFlow, commodities_from_demands, decompose, solve_min_congestion, solve_min_cost
from nocweave.schedule import (PeriodicSchedule, RoundedPathFlow, TokenSequence, allocate_slots, assign_widths,
                               edge_load, round_flows, rounded_from_list, rounded_to_list, validate_schedule)
from nocweave.topology import generate_topology, parse_topology

MESH = generate_topology(parse_topology("mesh:4x4"))


def chain(n):
    """PE0 -> s2 -> ... -> PE1 with ``n`` edges."""
    nodes = [0] + list(range(2, n + 1)) + [1]
    return NocGraph.build(2, n - 1, list(zip(nodes, nodes[1:])))


def test_round_exact_multiple():
    c = Commodity(0, 1, Fraction(1, 2))
    (rf,) = round_flows([PathFlow(c, (0, 1), Fraction(1, 2))], 8)
    assert rf.amount == Fraction(1, 2) and rf.slots == 4


def test_round_split_demand():
    c = Commodity(0, 1, Fraction(3, 10))
    out = round_flows([PathFlow(c, (2, 3), Fraction(1, 10)), PathFlow(c, (0, 1), Fraction(1, 5))], 8)
    assert [(rf.path, rf.amount) for rf in out] == [((0, 1), Fraction(1, 4)), ((2, 3), Fraction(1, 8))]
    assert sum(rf.amount for rf in out) == Fraction(3, 8)


def test_round_erases_surplus_paths():
    c = Commodity(0, 1, Fraction(1, 4))
    out = round_flows([PathFlow(c, (0, 1), Fraction(1, 4)), PathFlow(c, (2, 3), Fraction(1, 4))], 8)
    assert [(rf.path, rf.amount) for rf in out] == [((0, 1), Fraction(1, 4))]


def test_round_errors():
    c = Commodity(0, 1, 1)
    with pytest.raises(SchedulingError):
        round_flows([], 8, [c])
    with pytest.raises(SchedulingError):
        round_flows([PathFlow(c, (0,), 1)], 0)


@pytest.mark.parametrize("load, lanes, width", [(Fraction(3, 8), 1, 4), (Fraction(1), 1, 4),
                                                (Fraction(9, 8), 2, 8), (Fraction(0), 0, 0)])
def test_widths(load, lanes, width):
    g = chain(1)
    rounded = [RoundedPathFlow(Commodity(0, 1, load), (0,), int(load * 8), 8)] if load else []
    sized, ln = assign_widths(g, rounded, 4)
    assert ln == [lanes] and sized.edges[0].width_bits == width


def test_two_hop_on_empty_templates():
    g = chain(2)
    sched = allocate_slots([RoundedPathFlow(Commodity(0, 1, Fraction(1, 8)), (0, 1), 1, 8)], 8, [1, 1])
    (s,) = sched.sequences
    assert s.hops == [(0, 0), (1, 0)] and s.t == 0 and s.D == 2
    assert validate_schedule(sched, g).ok


def test_shared_edge_gets_distinct_slots():
    g = NocGraph.build(3, 1, [(0, 3), (1, 3), (3, 2)])
    e = g.edge_index
    rounded = [RoundedPathFlow(Commodity(0, 2, Fraction(1, 8)), (e(0, 3), e(3, 2)), 1, 8),
               RoundedPathFlow(Commodity(1, 2, Fraction(1, 8)), (e(1, 3), e(3, 2)), 1, 8)]
    sched = allocate_slots(rounded, 8, [1, 1, 1])
    shared = sorted(s.hops[1] for s in sched.sequences)
    assert shared == [(1, 0), (2, 0)]
    assert validate_schedule(sched, g, rounded).ok


def test_full_load_uses_every_slot():
    g = NocGraph.build(9, 1, [(p, 9) for p in range(8)] + [(9, 8)])
    out = g.edge_index(9, 8)
    rounded = [RoundedPathFlow(Commodity(p, 8, Fraction(1, 8)), (g.edge_index(p, 9), out), 1, 8) for p in range(8)]
    lanes = [1] * len(g.edges)
    sched = allocate_slots(rounded, 8, lanes)
    assert all(row[0] is not None for row in sched.templates[out])
    assert validate_schedule(sched, g, rounded).ok


def test_overfull_edge_fails():
    g = chain(1)
    with pytest.raises(SchedulingError):
        allocate_slots([RoundedPathFlow(Commodity(0, 1, Fraction(9, 8)), (0,), 9, 8)], 8, [1])


def test_validate_catches_double_booking_and_precedence():
    g = chain(2)
    c = Commodity(0, 1, Fraction(1, 8))
    sched = allocate_slots([RoundedPathFlow(c, (0, 1), 1, 8)], 8, [1, 1])
    sched.templates[0][5][0] = 0
    assert any("double booking" in f for f in validate_schedule(sched, g).failures)
    bad = PeriodicSchedule(8, [1, 1], {0: [[None]] * 8, 1: [[None]] * 8},
                           [TokenSequence(0, c, (0, 1), (3, 3), (0, 0), 8)])
    bad.templates = {e: [[0] if t == 3 else [None] for t in range(8)] for e in (0, 1)}
    assert any("does not follow" in f for f in validate_schedule(bad, g).failures)


def test_validate_catches_wrong_sequence_count():
    g = chain(1)
    c = Commodity(0, 1, Fraction(1, 4))
    rounded = [RoundedPathFlow(c, (0,), 2, 8)]
    sched = allocate_slots([RoundedPathFlow(c, (0,), 1, 8)], 8, [1])
    assert any("token sequences" in f for f in validate_schedule(sched, g, rounded).failures)


def mesh_schedule(seed, objective, phi=8):
    dm = gen_random_demands(16, seed, phi)
    comms = commodities_from_demands(dm)
    if objective == "mincost":
        fa = solve_min_cost(MESH, comms)
    else:
        caps = [None if MESH.is_pe(e.src) or MESH.is_pe(e.dst) else 1 for e in MESH.edges]
        fa = solve_min_congestion(MESH, comms, caps)
    paths = decompose(MESH, fa)
    rounded = round_flows(paths, phi, comms)
    _, lanes = assign_widths(MESH, rounded)
    return comms, paths, rounded, lanes, allocate_slots(rounded, phi, lanes)


@settings(max_examples=8)
@given(st.integers(0, 10_000), st.sampled_from(["mincost", "mincong"]))
def test_rounding_and_schedule_properties(seed, objective):
    comms, paths, rounded, lanes, sched = mesh_schedule(seed, objective)
    assert validate_schedule(sched, MESH, rounded).ok
    for c in comms:
        mine = [rf for rf in rounded if rf.commodity == c]
        n_paths = len({pf.path for pf in paths if pf.commodity == c})
        surplus = sum(rf.amount for rf in mine) - c.demand
        assert 0 <= surplus < Fraction(n_paths, 8)
    load = edge_load(rounded, len(MESH.edges))
    assert all(f <= n for f, n in zip(load, lanes))
    for s in sched.sequences:
        assert s.D <= len(s.path) * sched.phi
    for c, seqs in sched.by_commodity().items():
        seqs = sorted(seqs, key=lambda s: s.id)
        wrap = (seqs[0].t + sched.phi + seqs[0].D) - (seqs[-1].t + seqs[-1].D)
        assert (sum(sched.reorder_gaps[c]) + wrap) % sched.phi == 0


def test_schedule_json_round_trip():
    *_, rounded, _, sched = mesh_schedule(1, "mincong")
    text = sched.dumps()
    back = PeriodicSchedule.loads(text)
    assert back.dumps() == text
    assert rounded_from_list(rounded_to_list(rounded)) == rounded
