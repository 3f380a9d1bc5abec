from .decompose import cancel_cycles, decompose
from .mincong import DEFAULT_EPS, solve_min_congestion
from .mincost import shortest_paths, solve_min_cost
from .model import (Commodity, FlowAssignment, FlowReport, PathFlow, commodities_from_demands,
                    congestion, dumps_flow, flow_from_dict, flow_to_dict, path_cost, verify_flow)

__all__ = [
    "Commodity", "FlowAssignment", "FlowReport", "PathFlow", "DEFAULT_EPS",
    "cancel_cycles", "commodities_from_demands", "congestion", "decompose", "dumps_flow",
    "flow_from_dict", "flow_to_dict", "path_cost", "shortest_paths", "solve_min_congestion",
    "solve_min_cost", "verify_flow",
]
