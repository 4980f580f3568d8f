"""Exception types shared across the package."""


class KBLError(Exception):
    """Base class for all package errors."""


class ConfigError(KBLError, ValueError):
    """Invalid parameters or configuration."""


class DomainError(KBLError, ValueError):
    """Input outside the mathematical domain of an operation (NaN, inf, non-positive rate)."""


class NumericError(KBLError, ArithmeticError):
    """A numerical procedure produced a non-finite or inconsistent result."""


class NonConvergenceError(NumericError):
    """Iterative solver hit its iteration cap.

    ``residual`` carries the sup-norm of the last update and ``iterations`` the
    number of iterations performed.
    """

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
