"""Half-step Picard-Chebyshev solver.

One step maps the history ``z`` on ``[t0 - 3/2, t0]`` to the solution piece on
``[t0, t0 + 1/2]``: the fixed point of

    O(w)(t) = z(t0) + tau * int_0^t L_{q-1}[G_w](s) ds,
    G_w(s)  = F(z(t0 + s - 1 + eps * w(s))),

where ``L_{q-1}`` is interpolation at ``q - 1`` Chebyshev nodes. With friction
``a > 0`` the integral carries the kernel ``exp(a tau (s - t))`` and the initial
value decays as ``exp(-a tau t)``; only ``G`` is interpolated, the kernel is
integrated exactly.

Iterates are compared in ``d(f, g) = sup |f' - g'|``, evaluated on ``8 q``
Chebyshev points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np

from . import chebyshev as cheb
from .chebyshev import ChebSegment
from .errors import (
    BoundExceeded,
    DomainError,
    InvalidArgument,
    NonContracting,
    NumericError,
    SolverError,
)
from .systems import SystemSpec
from .trajectory import Trajectory

__all__ = [
    "DEFAULT_PICARD_ITERS",
    "SolverConfig",
    "StepOperator",
    "StepReport",
    "apply_operator",
    "contraction_ratio",
    "damped_integral",
    "iter_steps",
    "metric_d",
    "picard_step",
    "run",
]

STEP = 0.5
HISTORY = 1.5
DEFAULT_PICARD_ITERS = 30
#: ratio above which an iteration counts as non-contracting
STALL_RATIO = 0.99
STALL_COUNT = 5


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings of a run.

    Exactly one stopping rule is active: a fixed ``picard_iters`` count
    (30 when neither is given) or the tolerance ``nu``, which stops once
    ``d(f_{n+1}, f_n) <= nu / 4``.
    """

    q: int = 17
    picard_iters: int | None = None
    nu: float | None = None
    n_steps: int = 1
    monitor_contraction: bool = True
    max_iters: int = 1000

    def __post_init__(self):
        if not isinstance(self.q, (int, np.integer)) or self.q < 2:
            raise InvalidArgument(f"q must be an integer >= 2, got {self.q!r}")
        if self.picard_iters is not None and self.nu is not None:
            raise InvalidArgument("give either picard_iters or nu, not both")
        if self.nu is None:
            iters = DEFAULT_PICARD_ITERS if self.picard_iters is None else self.picard_iters
            if not isinstance(iters, (int, np.integer)) or iters < 1:
                raise InvalidArgument(f"picard_iters must be >= 1, got {iters!r}")
            object.__setattr__(self, "picard_iters", int(iters))
        elif not self.nu > 0:
            raise InvalidArgument(f"nu must be positive, got {self.nu!r}")
        if self.n_steps < 0:
            raise InvalidArgument("n_steps must be non-negative")

    @property
    def uses_tolerance(self) -> bool:
        return self.nu is not None


@dataclass(frozen=True)
class StepReport:
    step: int
    iterations: int
    residual: float
    ratio: float
    max_abs: float

    FIELDS = ("step", "iterations", "residual", "ratio", "max_abs")

    def row(self) -> tuple:
        return tuple(getattr(self, f) for f in self.FIELDS)


def damped_integral(P: ChebSegment, k: float, t) -> np.ndarray:
    """``int_{t_lo}^t exp(k (s - t)) P(s) ds`` for a polynomial segment ``P``.

    Repeated integration by parts that integrates the polynomial and
    differentiates the exponential:

        sum_{j >= 0} (-k)^j Q_{j+1}(t),   Q_{j+1} = antiderivative of Q_j, Q_0 = P.

    Terms are added until the remainder bound ``k^J |Q_J| (t - t_lo)`` drops
    below double precision relative to the first term.
    """
    t = np.asarray(t, dtype=float)
    Q = cheb.antiderivative(P)
    total = Q(t)
    if k == 0:
        return total
    h = P.width
    scale = _sup_norm(Q) + 1e-300
    coef = 1.0
    for _ in range(500):
        Q = cheb.antiderivative(Q)
        coef *= -k
        term = coef * Q(t)
        total = total + term
        if abs(coef) * _sup_norm(Q) * h <= 1e-17 * scale:
            return total
    raise NumericError(f"damped integral did not converge for k={k!r}")


def _sup_norm(seg: ChebSegment) -> float:
    return float(np.sum(np.abs(seg.coeffs)))


@lru_cache(maxsize=64)
def _kernel_matrices(q: int, k: float, tau: float):
    """Linear pieces of the reduced operator for node count ``q``.

    Returns ``(base, A, W, Dd, Vd)``: output coefficients are
    ``z0 * base + A @ G(nodes)``; ``W`` evaluates a ``q``-coefficient segment
    at the ``q - 1`` interpolation nodes; ``Dd`` and ``Vd`` evaluate the
    derivative and the value on the dense check grid.
    """
    lo, hi = 0.0, STEP
    tq = cheb.mapped_nodes(q, lo, hi)
    Tq = cheb.transform_matrix(q)
    A = np.empty((q, q - 1))
    for i in range(q - 1):
        P = cheb.interpolate_values(np.eye(q - 1)[i], lo, hi)
        if k == 0:
            vals = tau * cheb.antiderivative(P)(tq)
        else:
            vals = tau * damped_integral(P, k, tq)
        A[:, i] = Tq @ vals
    base = Tq @ np.exp(-k * tq)
    if k != 0:
        # interpolating a non-polynomial moves the start value by the
        # interpolation error; a ramp vanishing at the right end restores
        # output(t0) = z0 so consecutive steps join continuously
        left = (-1.0) ** np.arange(q)
        ramp = np.zeros(q)
        ramp[:2] = 0.5, -0.5
        A = A - np.outer(ramp, left @ A)
        base = base + ramp * (1.0 - left @ base)
    W = cheb.chebvander(cheb.cheb_nodes(q - 1), q)
    dense = cheb.mapped_nodes(8 * q, lo, hi)
    Dd = np.empty((dense.size, q))
    for j in range(q):
        Dd[:, j] = cheb.differentiate(ChebSegment(lo, hi, np.eye(q)[j]))(dense)
    Vd = cheb.chebvander(np.concatenate([[-1.0], cheb.cheb_nodes(8 * q), [1.0]]), q)
    s = cheb.mapped_nodes(q - 1, lo, hi)
    for arr in (base, A, W, Dd, Vd, s):
        arr.setflags(write=False)
    return base, A, W, Dd, Vd, s


class StepOperator:
    """The reduced operator for one system and node count, matrices cached."""

    def __init__(self, spec: SystemSpec, q: int):
        if q < 2:
            raise InvalidArgument("the reduced operator needs q >= 2")
        self.spec = spec
        self.q = int(q)
        k = float(spec.a * spec.tau)
        self.base, self.A, self.W, self.Dd, self.Vd, self.nodes = _kernel_matrices(
            self.q, k, float(spec.tau)
        )

    def __call__(self, w: np.ndarray, z: Trajectory, t0: float, z0: float) -> np.ndarray:
        """Apply the operator to coefficient vector ``w`` (length ``q``)."""
        wv = self.W @ w
        args = t0 + self.nodes - 1.0 + self.spec.eps * wv
        try:
            zv = z.evaluate(args)
        except DomainError as exc:
            raise DomainError(
                f"delayed argument left the history window ({exc}); "
                f"|eps| * K2 exceeds the 1/2 budget"
            ) from None
        g = self.spec.F(zv)
        if not np.all(np.isfinite(g)):
            raise NumericError("F returned non-finite values on the delayed state")
        return z0 * self.base + self.A @ g

    def distance(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.max(np.abs(self.Dd @ (f - g))))

    def derivative_scale(self, f: np.ndarray) -> float:
        return float(np.max(np.abs(self.Dd @ f)))

    def max_abs(self, f: np.ndarray) -> float:
        return float(np.max(np.abs(self.Vd @ f)))


def metric_d(f: ChebSegment, g: ChebSegment) -> float:
    """``sup |f' - g'|`` on ``8 q`` Chebyshev points of the common interval."""
    if (f.t_lo, f.t_hi) != (g.t_lo, g.t_hi):
        raise InvalidArgument("segments live on different intervals")
    q = max(f.q, g.q)
    t = cheb.mapped_nodes(8 * q, f.t_lo, f.t_hi)
    return float(np.max(np.abs(cheb.differentiate(f)(t) - cheb.differentiate(g)(t))))


def _coeffs(w: ChebSegment, q: int) -> np.ndarray:
    c = np.zeros(q)
    n = min(q, w.q)
    c[:n] = w.coeffs[:n]
    return c


def _origin(z: Trajectory) -> tuple[float, float]:
    t0 = z.t_max
    if t0 - z.t_min < HISTORY - 1e-12:
        raise InvalidArgument(
            f"history covers [{z.t_min}, {t0}], need at least {HISTORY} time units"
        )
    return t0, float(z.evaluate(t0))


def apply_operator(w: ChebSegment, z: Trajectory, spec: SystemSpec, cfg: SolverConfig) -> ChebSegment:
    """One application of the reduced operator to the candidate ``w``.

    ``w`` lives on ``[t0, t0 + 1/2]`` where ``t0 = z.t_max``.
    """
    t0, z0 = _origin(z)
    op = StepOperator(spec, cfg.q)
    return ChebSegment(t0, t0 + STEP, op(_coeffs(w, cfg.q), z, t0, z0))


def contraction_ratio(
    z: Trajectory,
    spec: SystemSpec,
    cfg: SolverConfig,
    w1: ChebSegment,
    w2: ChebSegment,
) -> float:
    """``d(O(w1), O(w2)) / d(w1, w2)``."""
    t0, z0 = _origin(z)
    op = StepOperator(spec, cfg.q)
    c1, c2 = _coeffs(w1, cfg.q), _coeffs(w2, cfg.q)
    den = op.distance(c1, c2)
    if den == 0:
        raise InvalidArgument("w1 and w2 are at distance zero")
    return op.distance(op(c1, z, t0, z0), op(c2, z, t0, z0)) / den


def picard_step(
    z: Trajectory,
    spec: SystemSpec,
    cfg: SolverConfig,
    *,
    step: int = 0,
    operator: StepOperator | None = None,
) -> tuple[ChebSegment, StepReport]:
    """Fixed point of the reduced operator for the half-step after ``z``.

    Starts from the constant ``z(t0)``. In fixed-count mode, iteration stops
    early only when an iterate reproduces its predecessor bit for bit, since
    every further application would return the same vector.
    """
    t0, z0 = _origin(z)
    op = operator or StepOperator(spec, cfg.q)
    f = np.zeros(cfg.q)
    f[0] = z0
    limit = cfg.max_iters if cfg.uses_tolerance else cfg.picard_iters
    residual = math.inf
    prev_residual = math.nan
    ratio = math.nan
    stalled = 0
    n = 0
    while n < limit:
        f_new = op(f, z, t0, z0)
        n += 1
        residual = op.distance(f_new, f)
        if np.array_equal(f_new, f):
            f = f_new
            residual = 0.0
            break
        floor = 1e3 * np.finfo(float).eps * (1.0 + op.derivative_scale(f_new))
        if math.isfinite(prev_residual) and prev_residual > floor:
            ratio = residual / prev_residual
            if cfg.monitor_contraction:
                stalled = stalled + 1 if ratio > STALL_RATIO else 0
                if stalled >= STALL_COUNT:
                    raise NonContracting(
                        f"contraction ratio above {STALL_RATIO} for {STALL_COUNT} "
                        f"iterations (last {ratio:.4g}, residual {residual:.3e})",
                        step,
                    )
        f = f_new
        prev_residual = residual
        if cfg.uses_tolerance and residual <= cfg.nu / 4:
            break
    else:
        if cfg.uses_tolerance:
            raise NonContracting(
                f"residual {residual:.3e} still above nu/4 after {limit} iterations", step
            )
    max_abs = op.max_abs(f)
    if not math.isfinite(max_abs):
        raise NumericError("non-finite solution segment")
    if max_abs > spec.M:
        raise BoundExceeded(
            f"max |x| = {max_abs:.6g} exceeds M = {spec.M}; rerun with a larger M", step
        )
    report = StepReport(step, n, float(residual), float(ratio), max_abs)
    return ChebSegment(t0, t0 + STEP, f), report


def iter_steps(
    history: Trajectory, spec: SystemSpec, cfg: SolverConfig
) -> Iterator[tuple[Trajectory, StepReport]]:
    """Yield the growing trajectory and the report after every half-step."""
    op = StepOperator(spec, cfg.q)
    traj = history
    for m in range(cfg.n_steps):
        try:
            seg, report = picard_step(traj, spec, cfg, step=m, operator=op)
        except SolverError as exc:
            exc.step = m
            raise
        except (DomainError, NumericError) as exc:
            raise type(exc)(f"step {m}: {exc}") from exc
        traj = traj.append(seg, bound=spec.M)
        yield traj, report


def run(
    history: Trajectory,
    spec: SystemSpec,
    cfg: SolverConfig,
    on_step: Callable[[StepReport], None] | None = None,
) -> tuple[Trajectory, list[StepReport]]:
    """Extend ``history`` by ``cfg.n_steps`` half-unit segments."""
    traj = history
    reports: list[StepReport] = []
    for traj, report in iter_steps(history, spec, cfg):
        reports.append(report)
        if on_step is not None:
            on_step(report)
    return traj, reports
