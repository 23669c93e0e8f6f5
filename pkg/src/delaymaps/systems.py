"""Right-hand sides ``x' = -a tau x + tau F(x(t - 1 + eps x(t)))``.

Time is already rescaled by the delay ``tau``, so the constant-delay part of
the argument is exactly one time unit.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidArgument, NumericError

__all__ = [
    "CUSTOM_FUNCTIONS",
    "SolverConstants",
    "SystemSpec",
    "compute_constants",
    "cubic_ikeda",
    "custom",
    "from_config",
    "mackey_glass",
]

SCAN_POINTS = 4096


@dataclass(frozen=True)
class SystemSpec:
    """A delay system and its a-priori orbit bound ``M``.

    ``F`` and ``F_prime`` act elementwise on numpy arrays. ``state_min`` is the
    lowest state at which ``F`` is defined; the constant scan never goes below
    it (Mackey-Glass with a fractional Hill exponent lives on ``x >= 0``).
    """

    name: str
    F: Callable = field(repr=False)
    F_prime: Callable = field(repr=False)
    tau: float
    eps: float = 0.0
    M: float = 2.0
    a: float = 0.0
    state_min: float = -math.inf
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidArgument(f"tau must be positive, got {self.tau!r}")
        if not self.M > 1:
            raise InvalidArgument(f"M must exceed 1, got {self.M!r}")
        if not self.a >= 0:
            raise InvalidArgument(f"friction a must be non-negative, got {self.a!r}")
        if not math.isfinite(self.eps):
            raise InvalidArgument("eps must be finite")

    def replace(self, **changes) -> "SystemSpec":
        return dataclasses.replace(self, **changes)

    def config(self) -> dict:
        """JSON-friendly description, the inverse of :func:`from_config`."""
        cfg = {"system": self.name, "tau": self.tau, "eps": self.eps, "M": self.M, "a": self.a}
        cfg.update(self.params)
        return cfg


@dataclass(frozen=True)
class SolverConstants:
    """Bounds entering the contraction argument.

    ``K0 = sup|F|`` and ``K1 = sup|F'|`` over the state ball, ``K2`` the bound
    on iterates, ``ell`` the Lipschitz budget and ``eps0`` the state-dependence
    below which contraction is guaranteed.
    """

    K0: float
    K1: float
    K2: float
    ell: float
    eps0: float


def cubic_ikeda(tau: float = 1.62, eps: float = 0.0, M: float = 2.0) -> SystemSpec:
    """``F(u) = u - u^3`` without friction."""

    def F(u):
        u = np.asarray(u, dtype=float)
        return u - u**3

    def F_prime(u):
        u = np.asarray(u, dtype=float)
        return 1.0 - 3.0 * u**2

    return SystemSpec("cubic_ikeda", F, F_prime, tau=tau, eps=eps, M=M)


def mackey_glass(
    beta: float = 2.0,
    n: float = 9.65,
    a: float = 1.0,
    tau: float = 2.0,
    eps: float = 0.0,
    M: float = 2.0,
) -> SystemSpec:
    """``F(u) = beta u / (1 + u^n)`` with friction ``a``.

    For a non-integer exponent the Hill term is only real for ``u >= 0`` and
    negative states raise :class:`NumericError`.
    """
    if not (beta > 0 and n > 0):
        raise InvalidArgument("Mackey-Glass needs beta > 0 and n > 0")
    integer_n = float(n).is_integer()

    def _power(u):
        u = np.asarray(u, dtype=float)
        if not integer_n and np.any(u < 0):
            raise NumericError(f"Mackey-Glass state {np.min(u)!r} < 0 with fractional n={n}")
        return u, u**n

    def F(u):
        u, un = _power(u)
        return _finite(beta * u / (1.0 + un), "F")

    def F_prime(u):
        u, un = _power(u)
        return _finite(beta * (1.0 + un - n * un) / (1.0 + un) ** 2, "F'")

    return SystemSpec(
        "mackey_glass",
        F,
        F_prime,
        tau=tau,
        eps=eps,
        M=M,
        a=a,
        state_min=-math.inf if integer_n else 0.0,
        params={"beta": beta, "n": n},
    )


def _zero(u):
    return np.zeros_like(np.asarray(u, dtype=float))


def _ones(u):
    return np.ones_like(np.asarray(u, dtype=float))


CUSTOM_FUNCTIONS: dict[str, tuple[Callable, Callable]] = {
    "zero": (_zero, _zero),
    "identity": (lambda u: np.asarray(u, dtype=float), _ones),
    "negative_feedback": (lambda u: -np.asarray(u, dtype=float), lambda u: -_ones(u)),
    "sine": (np.sin, np.cos),
    "tanh": (np.tanh, lambda u: 1.0 / np.cosh(u) ** 2),
}


def custom(name: str, tau: float, eps: float = 0.0, M: float = 2.0, a: float = 0.0) -> SystemSpec:
    """System built from one of the named right-hand sides in ``CUSTOM_FUNCTIONS``."""
    try:
        F, dF = CUSTOM_FUNCTIONS[name]
    except KeyError:
        raise InvalidArgument(
            f"unknown custom F {name!r}; choose from {sorted(CUSTOM_FUNCTIONS)}"
        ) from None
    return SystemSpec("custom", F, dF, tau=tau, eps=eps, M=M, a=a, params={"F": name})


def from_config(cfg: dict) -> SystemSpec:
    cfg = dict(cfg)
    kind = cfg.pop("system", "cubic_ikeda")
    common = {k: float(cfg[k]) for k in ("tau", "eps", "M") if k in cfg}
    if kind == "cubic_ikeda":
        return cubic_ikeda(**common)
    if kind == "mackey_glass":
        extra = {k: float(cfg[k]) for k in ("beta", "n", "a") if k in cfg}
        return mackey_glass(**common, **extra)
    if kind == "custom":
        if "tau" not in common:
            raise InvalidArgument("custom systems need tau")
        return custom(cfg["F"], a=float(cfg.get("a", 0.0)), **common)
    raise InvalidArgument(f"unknown system {kind!r}")


def compute_constants(spec: SystemSpec) -> SolverConstants:
    """Scan ``F`` and ``F'`` over the state ball and derive the step bounds."""
    lo = max(-spec.M, spec.state_min)
    hi = spec.M
    K0 = _sup_abs(spec.F, lo, hi, "F")
    K1 = _sup_abs(spec.F_prime, lo, hi, "F'")
    tau = spec.tau
    ell = max(2.0 * tau * K0, tau * K0 + spec.a * tau * spec.M)
    K2 = spec.M + tau * K0
    lip = tau * ell * K1
    eps0 = min(1.0 / (2.0 * K2), 1.0 / lip if lip > 0 else math.inf)
    return SolverConstants(K0=K0, K1=K1, K2=K2, ell=ell, eps0=eps0)


def _sup_abs(f: Callable, lo: float, hi: float, label: str) -> float:
    x = np.linspace(lo, hi, SCAN_POINTS + 1)
    with np.errstate(all="ignore"):
        y = np.abs(np.asarray(f(x), dtype=float))
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)][0]
        raise NumericError(f"{label} is not finite at {bad!r}")
    best = float(np.max(y))
    # polish every interior local maximum of the grid
    mid, left, right = y[1:-1], y[:-2], y[2:]
    peak = (mid >= left) & (mid >= right) & ((mid > left) | (mid > right))
    interior = np.flatnonzero(peak) + 1
    for i in interior:
        res = minimize_scalar(
            lambda s: -abs(float(f(np.array([s]))[0])),
            bounds=(x[i - 1], x[i + 1]),
            method="bounded",
            options={"xatol": 1e-13},
        )
        best = max(best, -float(res.fun))
    return best


def _finite(values, label):
    if not np.all(np.isfinite(values)):
        raise NumericError(f"{label} produced non-finite values")
    return values
