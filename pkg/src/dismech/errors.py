"""Exception types shared across the package."""


class MechanismError(Exception):
    """Base class for errors raised by mechanism runs and their setup."""


class ConfigurationError(MechanismError):
    """Invalid scenario, parameter, or graph configuration."""


class NonConvergenceError(MechanismError):
    """A mechanism run hit its round cap before the stop test fired.

    Carries the partial transcript so the run can still be inspected.
    """

    def __init__(self, message, transcript=None):
        super().__init__(message)
        self.transcript = transcript


class MalformedReportError(MechanismError):
    """A follower report contained NaN or was otherwise unusable."""

    def __init__(self, message, agent):
        super().__init__(message)
        self.agent = agent


class InfeasibleSubproblemError(MechanismError):
    """A reduced (agent-removed) problem has no feasible point."""

    def __init__(self, message, agent):
        super().__init__(message)
        self.agent = agent


class StrategyError(MechanismError):
    """A strategy's internal computation failed (e.g. inner simulation)."""
