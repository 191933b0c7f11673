"""Exception types raised by acflow."""


class AcflowError(Exception):
    """Base class for all acflow errors."""


class MetricDegenerateError(AcflowError):
    """The metric factor is not positive at some node."""


class ResolutionError(AcflowError):
    """The interface width is under-resolved by the grid."""


class GeometryError(AcflowError):
    """Initial interface placed too close to a chart singularity."""


class StabilityError(AcflowError):
    """Requested time step exceeds the stability limit."""


class SolverBlowUpError(AcflowError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class EmptyInterfaceError(AcflowError):
    """The phase field has no sign change, so there is no interface."""


class QuadratureError(AcflowError):
    """Adaptive quadrature failed to reach the requested accuracy."""


class KernelDomainError(AcflowError):
    """Kernel evaluated outside its time domain (t >= s)."""


class ConfigError(AcflowError):
    """Configuration file is malformed or violates constraints.

    ``problems`` lists every violation found, not just the first.
    """

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)
