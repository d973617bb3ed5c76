"""Exception types shared across the package."""


class KernelSMEError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(KernelSMEError, ValueError):
    """Invalid model, kernel or scenario configuration."""


class PreconditionError(KernelSMEError, ValueError):
    """An operation was called with inputs violating its contract."""


class NumericalError(KernelSMEError, ArithmeticError):
    """A factorization failed even after regularization.

    ``diagnostics`` carries whatever was known at the point of failure
    (matrix size, trace, smallest eigenvalue, jitter levels tried).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
