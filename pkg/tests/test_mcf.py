from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from nocweave.errors import ConservationError, InfeasibleError
from nocweave.graph import NocGraph
from nocweave.mcf import (Commodity, FlowAssignment, PathFlow, decompose, dumps_flow, flow_from_dict,
                          flow_to_dict, solve_min_congestion, solve_min_cost, verify_flow)
from nocweave.topology import generate_topology, parse_topology

import oracles

SUITE = oracles.small_suite()


def diamond():
    # PE0 -> {s2, s3} -> PE1: two edge-disjoint 2-hop routes
    return NocGraph.build(2, 2, [(0, 2), (2, 1), (0, 3), (3, 1)])


def test_adjacent_min_cost():
    g = NocGraph.build(2, 0, [(0, 1)])
    fa = solve_min_cost(g, [Commodity(0, 1, 1)])
    assert fa.value == 1 and fa.flows == [{0: 1}]


def test_two_by_two_mesh_min_cost():
    g = generate_topology(parse_topology("mesh:2x2"))
    c = Commodity(0, 3, 2)
    fa = solve_min_cost(g, [c])
    assert fa.value == 2 * oracles.min_cost(g, [Commodity(0, 3, 1)]) == 4
    (pf,) = fa.paths
    candidates = [p for p in oracles.simple_paths(g, 0, 3) if len(p) == len(pf.path)]
    assert len(candidates) == 2
    assert g.path_nodes(pf.path) == min(g.path_nodes(p) for p in candidates)


def test_hop_limit_below_shortest_is_infeasible():
    g = generate_topology(parse_topology("mesh:2x2"))
    with pytest.raises(InfeasibleError, match="0->3"):
        solve_min_cost(g, [Commodity(0, 3, 1)], hop_limit=3)
    with pytest.raises(InfeasibleError):
        solve_min_congestion(g, [Commodity(0, 3, 1)], [1] * len(g.edges), hop_limit=3)


@pytest.mark.parametrize("case", range(len(SUITE)))
def test_min_cost_matches_enumeration(case):
    g, comms, _, hop = SUITE[case]
    fa = solve_min_cost(g, comms, hop)
    assert fa.value == oracles.min_cost(g, comms, hop)
    assert verify_flow(g, comms, fa).ok


@pytest.mark.parametrize("case", range(len(SUITE)))
def test_min_congestion_within_eps_of_path_lp(case):
    g, comms, caps, hop = SUITE[case]
    fa = solve_min_congestion(g, comms, caps, eps=0.02, hop_limit=hop)
    assert float(fa.value) <= (1 + 0.02) * oracles.min_congestion(g, comms, caps, hop) + 1e-9
    assert verify_flow(g, comms, fa).ok
    assert all(len(pf.path) <= hop for pf in fa.paths) if hop else True


def test_parallel_routes_split_evenly():
    g = diamond()
    fa = solve_min_congestion(g, [Commodity(0, 1, 1)], [1] * 4)
    assert fa.value == Fraction(1, 2)
    assert sorted(pf.amount for pf in fa.paths) == [Fraction(1, 2)] * 2


def test_min_cut_demand_gives_unit_congestion():
    g = diamond()
    fa = solve_min_congestion(g, [Commodity(0, 1, 2)], [1] * 4)
    assert fa.value == 1


def test_no_commodities():
    fa = solve_min_congestion(diamond(), [], [1] * 4)
    assert fa.value == 0 and fa.flows == []


def test_bad_congestion_parameters():
    with pytest.raises(ValueError):
        solve_min_congestion(diamond(), [Commodity(0, 1, 1)], [1] * 4, eps=0.5)
    with pytest.raises(ValueError):
        solve_min_congestion(diamond(), [Commodity(0, 1, 1)], [1, 0, 1, 1])
    with pytest.raises(InfeasibleError):
        solve_min_congestion(diamond(), [Commodity(1, 0, 1)], [1] * 4)


def test_uncapacitated_edges_leave_the_objective():
    g = diamond()
    caps = [None if g.edges[e].src == 0 else 1 for e in range(4)]
    fa = solve_min_congestion(g, [Commodity(0, 1, 1)], caps)
    assert fa.value == Fraction(1, 2)


def test_pes_never_relay():
    # 0 -> 1 -> 2 would be the only route through PE 1
    g = NocGraph.build(3, 0, [(0, 1), (1, 2)])
    with pytest.raises(InfeasibleError):
        solve_min_cost(g, [Commodity(0, 2, 1)])


def test_decompose_single_and_disjoint_paths():
    g = diamond()
    c = Commodity(0, 1, 1)
    via2, via3 = (g.edge_index(0, 2), g.edge_index(2, 1)), (g.edge_index(0, 3), g.edge_index(3, 1))
    one = FlowAssignment([c], [{e: Fraction(1) for e in via3}], 4)
    assert decompose(g, one) == [PathFlow(c, via3, 1)]
    half = Fraction(1, 2)
    two = FlowAssignment([c], [{e: half for e in range(4)}], 4)
    assert decompose(g, two) == [PathFlow(c, via2, half), PathFlow(c, via3, half)]


def test_decompose_cancels_cycle():
    g = NocGraph.build(2, 2, [(0, 2), (2, 1), (2, 3), (3, 2)])
    c = Commodity(0, 1, 1)
    e = g.edge_index
    tenth = Fraction(1, 10)
    flow = {e(0, 2): Fraction(1), e(2, 1): Fraction(1), e(2, 3): tenth, e(3, 2): tenth}
    paths = decompose(g, FlowAssignment([c], [flow], len(g.edges)))
    assert paths == [PathFlow(c, (e(0, 2), e(2, 1)), 1)]


def test_decompose_rejects_broken_conservation():
    g = diamond()
    c = Commodity(0, 1, 1)
    with pytest.raises(ConservationError):
        decompose(g, FlowAssignment([c], [{g.edge_index(0, 2): Fraction(1), g.edge_index(2, 1): Fraction(1, 2)}], 4))


@pytest.mark.parametrize("case", range(0, len(SUITE), 3))
def test_decompose_reaccumulates_exactly(case):
    g, comms, caps, hop = SUITE[case]
    fa = solve_min_congestion(g, comms, caps, hop_limit=hop)
    paths = decompose(g, fa)
    again = FlowAssignment.from_paths(g, comms, paths, "lambda", fa.value)
    assert again.flows == fa.flows
    for c in comms:
        mine = [pf for pf in paths if pf.commodity == c]
        assert len(mine) <= len(g.edges)
        assert sum(pf.amount for pf in mine) == c.demand
        for pf in mine:
            nodes = g.path_nodes(pf.path)
            assert nodes[0] == c.src and nodes[-1] == c.dst and len(set(nodes)) == len(nodes)


@settings(max_examples=40)
@given(st.integers(0, len(SUITE) - 1), st.lists(st.fractions(Fraction(1, 8), 3, max_denominator=8),
                                                 min_size=3, max_size=3))
def test_flows_nonnegative_and_totals_add_up(case, demands):
    g, comms, caps, hop = SUITE[case]
    comms = [Commodity(c.src, c.dst, d) for c, d in zip(comms, demands)]
    fa = solve_min_congestion(g, comms, caps, hop_limit=hop)
    assert all(v >= 0 for fc in fa.flows for v in fc.values())
    total = fa.total()
    for e in range(len(g.edges)):
        assert total[e] == sum(fc.get(e, 0) for fc in fa.flows)


def test_verify_flow_reports_failures():
    g = diamond()
    c = Commodity(0, 1, 1)
    good = solve_min_cost(g, [c])
    assert verify_flow(g, [c], good).ok
    a, b = g.edge_index(0, 2), g.edge_index(2, 1)
    bumped = FlowAssignment([c], [{a: Fraction(11, 10), b: Fraction(1)}], 4)
    report = verify_flow(g, [c], bumped)
    assert not report.ok and "node 2" in report.first
    half = FlowAssignment([c], [{a: Fraction(1, 2), b: Fraction(1, 2)}], 4)
    assert "demand" in verify_flow(g, [c], half).first


def test_flow_json_round_trip():
    g = diamond()
    fa = solve_min_congestion(g, [Commodity(0, 1, 1)], [1] * 4)
    back, paths = flow_from_dict(g, flow_to_dict(fa, fa.paths))
    assert back.value == fa.value and back.flows == fa.flows
    assert dumps_flow(back, paths) == dumps_flow(fa, fa.paths)
