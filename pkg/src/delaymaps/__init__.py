"""Picard-Chebyshev solver for state-dependent delay equations and attractor analysis."""

from .chebyshev import ChebSegment
from .errors import (
    BoundExceeded,
    ConsistencyError,
    DegenerateInput,
    DelayMapError,
    DomainError,
    InsufficientData,
    InvalidArgument,
    NonContracting,
    NumericError,
    ResourceError,
    SolverError,
)
from .solver import SolverConfig, StepReport, picard_step, run
from .systems import SystemSpec, compute_constants, cubic_ikeda, mackey_glass
from .trajectory import TimeSeries, Trajectory

__version__ = "0.1.0"
