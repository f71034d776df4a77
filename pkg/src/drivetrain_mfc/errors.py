class InvalidParameterError(ValueError):
    """A parameter or scenario field violates its contract."""


class SimulationDiverged(RuntimeError):
    """Plant state became non-finite or exceeded the divergence threshold."""

    def __init__(self, step: int, detail: str = "state diverged"):
        super().__init__(f"{detail} at plant step {step}")
        self.step = step


class TrajectoryFormatError(ValueError):
    pass


class OptimizationFailed(RuntimeError):
    pass
