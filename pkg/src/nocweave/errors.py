class NocweaveError(Exception):
    """Base class for all toolchain errors."""


class ConstructionError(NocweaveError):
    pass


class SpecError(NocweaveError):
    """Malformed task graph or timing specification."""


class InfeasibleError(NocweaveError):
    """No routing exists under the requested constraints."""


class ConservationError(NocweaveError):
    pass


class SchedulingError(NocweaveError):
    pass


class CompilationError(NocweaveError):
    pass


class SimulationError(NocweaveError):
    pass


class ConfigError(NocweaveError):
    pass


class StageError(NocweaveError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
