"""Exception hierarchy shared by the solver, training and CLI layers."""


class UncsetError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(UncsetError, ValueError):
    pass


class DimensionMismatch(UncsetError, ValueError):
    pass


class InvalidActivation(UncsetError, ValueError):
    pass


class IndexOutOfRange(UncsetError, IndexError):
    pass


class DegenerateData(UncsetError, ValueError):
    pass


class IterationLimit(UncsetError, RuntimeError):
    pass


class CutLimit(UncsetError, RuntimeError):
    pass


class TooLarge(UncsetError, RuntimeError):
    pass


class NoConvergence(UncsetError, RuntimeError):
    pass


class EmptyBoundary(UncsetError, RuntimeError):
    pass


class MasterInfeasible(UncsetError, RuntimeError):
    pass


class Unreachable(UncsetError, ValueError):
    pass


class FormatError(UncsetError, ValueError):
    """Raised when a model, network or scenario file cannot be parsed."""


class LpFailure(UncsetError, RuntimeError):
    """An LP that must have an optimum came back infeasible or unbounded."""

    def __init__(self, message: str, status=None):
        super().__init__(message)
        self.status = status
