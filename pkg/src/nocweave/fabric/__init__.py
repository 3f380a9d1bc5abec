from .controls import Controls, NiConfig, SessionRx, SwitchConfig, emit_controls, predict_latencies, release_offsets
from .simulator import SimReport, Steady, TcgReplay, simulate

__all__ = [
    "Controls", "NiConfig", "SessionRx", "SwitchConfig", "emit_controls", "predict_latencies", "release_offsets",
    "SimReport", "Steady", "TcgReplay", "simulate",
]
