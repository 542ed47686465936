"""Exception types raised across the package."""


class DynentError(Exception):
    """Base class for all errors raised by dynent."""


class LabelCollision(DynentError):
    pass


class UnknownLabel(DynentError, KeyError):
    pass


class NotHermitian(DynentError, ValueError):
    pass


class ShapeError(DynentError, ValueError):
    pass


class InvalidPOVM(DynentError, ValueError):
    pass


class SolverError(DynentError, RuntimeError):
    """The conic solver did not return a usable optimum."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class PreconditionError(DynentError, ValueError):
    pass
