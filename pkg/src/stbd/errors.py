"""Exception types raised across the package."""


class StbdError(Exception):
    """Base class for all package errors."""


class InvalidArgument(StbdError, ValueError):
    """An argument is outside the domain of the operation."""


class InfeasibleDimensions(StbdError, ValueError):
    """System dimensions violate a block-diagonalization feasibility condition."""


class DegenerateChannel(StbdError, ArithmeticError):
    """A channel draw is (numerically) rank deficient for the requested design."""


class NumericalFailure(StbdError, ArithmeticError):
    """An iterative numerical routine failed to converge."""
