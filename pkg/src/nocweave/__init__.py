"""Design toolchain for header-free TDM networks-on-chip.

Stages: topology generation and floorplan, demand extraction, multi-commodity
routing, rounding and slot allocation, control-table compilation, and
slot-accurate simulation.
"""
from .errors import (CompilationError, ConfigError, ConservationError, ConstructionError, InfeasibleError,
                     NocweaveError, SchedulingError, SimulationError, SpecError, StageError)
from .graph import Edge, NocGraph, NodeKind

__version__ = "0.1.0"

__all__ = [
    "CompilationError", "ConfigError", "ConservationError", "ConstructionError", "Edge", "InfeasibleError",
    "NocGraph", "NocweaveError", "NodeKind", "SchedulingError", "SimulationError", "SpecError", "StageError",
]
