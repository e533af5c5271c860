"""Exception hierarchy shared by all modules."""


class QLorentzError(Exception):
    """Base class; ``module`` tags the subsystem that raised."""

    module = "qlorentz"

    def __init__(self, message, module=None):
        if module is not None:
            self.module = module
        super().__init__(message)

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class DomainError(QLorentzError, ValueError):
    pass


class ResolutionError(QLorentzError):
    pass


class CapacityError(QLorentzError):
    pass


class CoverageError(QLorentzError):
    pass


class AccuracyError(QLorentzError):
    """Raised when a quadrature or extrapolation residual exceeds tolerance.

    ``residual`` carries the estimate that failed.
    """

    def __init__(self, message, residual=float("nan"), module=None):
        super().__init__(message, module)
        self.residual = residual


class NonContractionError(QLorentzError):
    pass


class ConvergenceError(QLorentzError):
    pass


class ConsistencyError(QLorentzError):
    pass


class NoScatteringError(QLorentzError):
    pass


class KernelError(QLorentzError):
    pass


class StepSizeError(QLorentzError):
    pass


class EmptyMeasureError(QLorentzError):
    pass


class ConfigError(QLorentzError):
    module = "cli"


class DegenerateConfigurationWarning(UserWarning):
    pass
