"""Exception hierarchy shared by the solver, the checks and the CLI."""


class TracerSteerError(Exception):
    """Base class for all errors raised by this package."""


class NotSpd(TracerSteerError, ValueError):
    """A matrix failed symmetric positive-definite certification."""


class NonMonotoneGrid(TracerSteerError, ValueError):
    pass


class InterpolantNotSpd(TracerSteerError, ValueError):
    pass


class RankDeficientTracer(TracerSteerError, ValueError):
    pass


class FlowDegenerate(TracerSteerError, ArithmeticError):
    """Raised when a monitored invariant (invertible Phi, full-rank N) trips."""


class SingularInnerMatrix(TracerSteerError, ArithmeticError):
    pass


class InfeasibleSurface(TracerSteerError, ValueError):
    pass


class NotDetermined(TracerSteerError, ValueError):
    pass


class NoConvergence(TracerSteerError, RuntimeError):
    def __init__(self, message, best_residual=float("nan"), best=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best = best


class GridTooCoarse(TracerSteerError, ValueError):
    pass


class SchemaError(TracerSteerError, ValueError):
    pass


class RegimeMismatch(TracerSteerError, ValueError):
    pass


class UnknownGenerator(TracerSteerError, KeyError):
    pass


class FileFormatError(TracerSteerError, ValueError):
    pass


class CheckFailed(TracerSteerError, AssertionError):
    def __init__(self, failures):
        super().__init__("; ".join(failures))
        self.failures = list(failures)
