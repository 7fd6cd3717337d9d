"""Exception hierarchy shared by the simulator modules."""


class StochPowerError(Exception):
    """Base class for all package errors."""


class DomainError(StochPowerError, ValueError):
    """An argument lies outside the domain of an operation."""


class DegenerateSampleError(DomainError):
    """A t-statistic was requested for a sample with zero variance."""


class SimulationFault(StochPowerError):
    """A router buffer starved under the ``error`` starvation policy."""

    def __init__(self, slot: int, interval: str, message: str = "buffer starved"):
        self.slot = slot
        self.interval = interval
        super().__init__(f"{message} at slot {slot}, interval {interval}")


class InfeasiblePlanError(StochPowerError):
    """No operation can realize a requested target probability."""

    def __init__(self, p_tar, p_ext):
        self.p_tar = p_tar
        self.p_ext = p_ext
        super().__init__(
            f"target p_tar={float(p_tar):g} is infeasible for p_ext={float(p_ext):g}: "
            f"multiplication covers [0, {float(p_ext):g}], "
            f"addition covers [{float(p_ext) / 2:g}, {(1 + float(p_ext)) / 2:g}]"
        )


class ConfigError(StochPowerError):
    """A configuration file or command-line combination is invalid."""
