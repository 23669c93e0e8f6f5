"""Exception hierarchy shared by all delaymaps modules."""


class DelayMapError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(DelayMapError, ValueError):
    pass


class DomainError(DelayMapError, ValueError):
    """Evaluation requested outside the domain of a segment or trajectory."""


class NumericError(DelayMapError, ArithmeticError):
    """A non-finite value was produced where a finite one is required."""


class ConsistencyError(DelayMapError, ValueError):
    """Segments do not line up (gap in time or jump in value)."""


class DegenerateInput(DelayMapError, ValueError):
    pass


class InsufficientData(DelayMapError, ValueError):
    pass


class ResourceError(DelayMapError, MemoryError):
    pass


class SolverError(DelayMapError):
    """Failure of a single half-step; ``step`` is filled in by :func:`run`."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step

    def __str__(self):
        msg = super().__str__()
        return msg if self.step is None else f"step {self.step}: {msg}"


class BoundExceeded(SolverError):
    """The computed segment left the a-priori ball ``|x| <= M``."""


class NonContracting(SolverError):
    """Picard residuals stopped shrinking."""
