"""Exception hierarchy shared by every module.

The CLI maps each class onto a process exit code.
"""


class StMulticastError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InvalidInputError(StMulticastError, ValueError):
    exit_code = 1


class NumericalFailure(StMulticastError, ArithmeticError):
    """An iterative method did not converge.

    ``best`` optionally carries the best value found before giving up.
    """

    exit_code = 2

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConstraintViolation(StMulticastError, ValueError):
    exit_code = 3


class SingularityError(ConstraintViolation, ArithmeticError):
    """Input matrix is (numerically) rank deficient."""
