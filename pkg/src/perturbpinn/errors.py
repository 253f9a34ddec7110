"""Exception types shared across the package."""


class PerturbPinnError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteError(PerturbPinnError):
    """A forward pass or gradient produced NaN/Inf values.

    The ``location`` attribute names the layer index or parameter path
    where the non-finite value was first observed.
    """

    def __init__(self, message: str, location: str = ""):
        super().__init__(message)
        self.location = location


class SingularNormalMatrixError(PerturbPinnError):
    """Normal matrix is singular or numerically rank deficient.

    ``condition`` carries the 2-norm condition estimate that triggered
    the failure (``inf`` for an exactly singular matrix).
    """

    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(message)
        self.condition = condition


class TrainingDivergedError(PerturbPinnError):
    """Training loss exceeded the divergence bound or became non-finite.

    ``history`` holds the per-iteration total losses recorded up to and
    including the diverging iteration.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = [] if history is None else history


class IntegrationError(PerturbPinnError):
    """Base class for Runge-Kutta integration failures."""


class StepLimitExceeded(IntegrationError):
    """The adaptive integrator ran out of its step budget."""


class TrajectoryBlowUp(IntegrationError):
    """The integrated state exceeded the blow-up detection bound."""


class UsageError(PerturbPinnError):
    """Invalid command-line usage or malformed input files."""
