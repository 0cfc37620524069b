"""Exception hierarchy.

Exit-code classes used by the command line: config errors map to 2,
numerical failures to 3, audit violations to 4.
"""


class ChaosLabError(Exception):
    exit_code = 3


class ConfigError(ChaosLabError):
    """Invalid experiment configuration; ``errors`` lists every problem found."""

    exit_code = 2

    def __init__(self, errors):
        self.errors = [e if isinstance(e, str) else f"{e[0]}: {e[1]}" for e in errors]
        super().__init__("; ".join(self.errors))


class NumericalError(ChaosLabError):
    exit_code = 3


class DomainError(NumericalError, ValueError):
    """Argument outside the mathematical domain (coincident points, r <= 0, ...)."""


class UnsupportedKernelError(NumericalError, ValueError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RescalingError(NumericalError):
    pass


class SupportError(NumericalError, ValueError):
    pass


class CFLError(NumericalError, ValueError):
    pass


class StepFailure(NumericalError):
    def __init__(self, message, replica=None, diagnostics=None):
        super().__init__(message)
        self.replica = replica
        self.diagnostics = diagnostics or {}


class MixingError(NumericalError):
    pass


class EstimatorError(NumericalError):
    """Importance-sampling estimate unreliable (effective sample size too small)."""


class InsufficientSamplesError(NumericalError, ValueError):
    pass


class MemoryBudgetError(NumericalError):
    pass


class InvalidLSIError(NumericalError):
    pass


class AuditViolation(ChaosLabError):
    exit_code = 4
