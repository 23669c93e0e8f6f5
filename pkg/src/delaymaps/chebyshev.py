"""Chebyshev-T series on a finite interval.

Every solution piece the solver produces is a :class:`ChebSegment`: a dense
coefficient vector in the Chebyshev basis of the first kind, living on
``[t_lo, t_hi]`` through the affine map ``u = 2 (t - t_lo) / (t_hi - t_lo) - 1``.
For the half-unit steps of the solver ``[t_lo, t_hi] = [0, 1/2]`` and the map
reduces to ``u = 4 t - 1``.

Interpolation uses the ``q`` Chebyshev points of the first kind and the
discrete cosine transform written out as an O(q^2) matrix product; ``q`` never
exceeds a few dozen here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidArgument, NumericError

__all__ = [
    "CLAMP_TOL",
    "ChebSegment",
    "antiderivative",
    "cheb_nodes",
    "chebvander",
    "clenshaw",
    "differentiate",
    "evaluate",
    "interpolate",
    "interpolate_values",
    "lebesgue_mu",
    "mapped_nodes",
    "transform_matrix",
    "truncate",
]

#: Points this far outside a segment are snapped onto its boundary.
CLAMP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ChebSegment:
    """Polynomial ``sum_j coeffs[j] T_j(u(t))`` on ``[t_lo, t_hi]``."""

    t_lo: float
    t_hi: float
    coeffs: np.ndarray

    def __post_init__(self):
        t_lo, t_hi = float(self.t_lo), float(self.t_hi)
        if not (math.isfinite(t_lo) and math.isfinite(t_hi) and t_lo < t_hi):
            raise InvalidArgument(f"invalid segment interval [{t_lo}, {t_hi}]")
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size == 0:
            raise InvalidArgument("a segment needs at least one coefficient")
        if not np.all(np.isfinite(c)):
            raise NumericError("segment coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "t_lo", t_lo)
        object.__setattr__(self, "t_hi", t_hi)
        object.__setattr__(self, "coeffs", c)

    @property
    def q(self) -> int:
        return self.coeffs.size

    @property
    def width(self) -> float:
        return self.t_hi - self.t_lo

    def __call__(self, t):
        return evaluate(self, t)

    def __eq__(self, other):
        if not isinstance(other, ChebSegment):
            return NotImplemented
        return (
            self.t_lo == other.t_lo
            and self.t_hi == other.t_hi
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None

    def __repr__(self):
        return f"ChebSegment([{self.t_lo!r}, {self.t_hi!r}], q={self.q})"

    def to_u(self, t):
        """Map times to the reference variable, clamping tiny overshoots."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.t_lo, self.t_hi
        if np.any(t < lo - CLAMP_TOL) or np.any(t > hi + CLAMP_TOL):
            bad = t[(t < lo - CLAMP_TOL) | (t > hi + CLAMP_TOL)].flat[0]
            raise DomainError(f"t={bad!r} outside segment [{lo!r}, {hi!r}]")
        u = 2.0 * (np.clip(t, lo, hi) - lo) / (hi - lo) - 1.0
        return np.clip(u, -1.0, 1.0)

    def to_dict(self) -> dict:
        return {"t_lo": self.t_lo, "t_hi": self.t_hi, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "ChebSegment":
        return cls(data["t_lo"], data["t_hi"], data["coeffs"])

    @classmethod
    def constant(cls, value: float, t_lo: float = 0.0, t_hi: float = 0.5, q: int = 1):
        c = np.zeros(q)
        c[0] = value
        return cls(t_lo, t_hi, c)


def cheb_nodes(q: int) -> np.ndarray:
    """Chebyshev points of the first kind ``cos((2k+1) pi / (2q))``, decreasing."""
    q = _check_q(q)
    k = np.arange(q)
    return np.cos((2 * k + 1) * np.pi / (2 * q))


def mapped_nodes(q: int, t_lo: float = 0.0, t_hi: float = 0.5) -> np.ndarray:
    return (cheb_nodes(q) + 1.0) * (t_hi - t_lo) / 2.0 + t_lo


def chebvander(u, n: int) -> np.ndarray:
    """Matrix ``V[i, j] = T_j(u_i)`` for ``j < n`` via the three-term recurrence."""
    u = np.asarray(u, dtype=float).reshape(-1)
    V = np.empty((u.size, n))
    V[:, 0] = 1.0
    if n > 1:
        V[:, 1] = u
    for j in range(2, n):
        V[:, j] = 2.0 * u * V[:, j - 1] - V[:, j - 2]
    return V


@lru_cache(maxsize=None)
def transform_matrix(q: int) -> np.ndarray:
    """Node values -> coefficients: ``c = transform_matrix(q) @ h(u_k)``."""
    q = _check_q(q)
    j = np.arange(q)[:, None]
    k = np.arange(q)[None, :]
    T = np.cos(j * (2 * k + 1) * np.pi / (2 * q))
    A = (2.0 / q) * T
    A[0] = 1.0 / q
    A.setflags(write=False)
    return A


def interpolate_values(values, t_lo: float = 0.0, t_hi: float = 0.5) -> ChebSegment:
    """Segment through the given samples at the ``len(values)`` mapped nodes."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise InvalidArgument("need at least one node value")
    bad = ~np.isfinite(v)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        node = mapped_nodes(v.size, t_lo, t_hi)[k]
        raise NumericError(f"non-finite sample {v[k]!r} at node t={node!r}")
    return ChebSegment(t_lo, t_hi, transform_matrix(v.size) @ v)


def interpolate(h: Callable, q: int, t_lo: float = 0.0, t_hi: float = 0.5) -> ChebSegment:
    """Lagrange-Chebyshev interpolant of ``h`` at ``q`` first-kind nodes.

    ``h`` may be vectorised; scalar-only callables are evaluated node by node.
    """
    t = mapped_nodes(q, t_lo, t_hi)
    try:
        v = np.asarray(h(t), dtype=float)
        if v.shape != t.shape:
            v = np.broadcast_to(v, t.shape) if v.ndim == 0 else None
    except (TypeError, ValueError):
        v = None
    if v is None:
        v = np.array([float(h(tk)) for tk in t])
    return interpolate_values(v, t_lo, t_hi)


def clenshaw(coeffs, u):
    """Evaluate ``sum_j c[..., j] T_j(u)`` with broadcasting over leading axes."""
    c = np.asarray(coeffs, dtype=float)
    u = np.asarray(u, dtype=float)
    n = c.shape[-1]
    if n == 1:
        return np.broadcast_to(c[..., 0], np.broadcast(c[..., 0], u).shape).copy()
    b1 = np.zeros(np.broadcast(c[..., 0], u).shape)
    b2 = np.zeros_like(b1)
    two_u = 2.0 * u
    for j in range(n - 1, 0, -1):
        b1, b2 = two_u * b1 - b2 + c[..., j], b1
    return u * b1 - b2 + c[..., 0]


def evaluate(seg: ChebSegment, t):
    """Value of the segment at ``t`` (scalar or array)."""
    u = seg.to_u(t)
    out = clenshaw(seg.coeffs, u)
    return float(out) if np.ndim(out) == 0 else out


def differentiate(seg: ChebSegment) -> ChebSegment:
    """Derivative with respect to ``t``; length ``max(q - 1, 1)``."""
    c = seg.coeffs
    n = c.size
    if n == 1:
        return ChebSegment(seg.t_lo, seg.t_hi, [0.0])
    d = np.zeros(n + 1)
    for k in range(n - 2, -1, -1):
        d[k] = d[k + 2] + 2.0 * (k + 1) * c[k + 1]
    d[0] *= 0.5
    return ChebSegment(seg.t_lo, seg.t_hi, d[: n - 1] * (2.0 / seg.width))


def antiderivative(seg: ChebSegment) -> ChebSegment:
    """Primitive ``A`` with ``A(t_lo) = 0``; length ``q + 1``."""
    c = np.concatenate([seg.coeffs, [0.0, 0.0]])
    n = seg.q
    b = np.zeros(n + 1)
    b[1] = c[0] - 0.5 * c[2]
    for k in range(2, n + 1):
        b[k] = (c[k - 1] - c[k + 1]) / (2.0 * k)
    b *= seg.width / 2.0
    signs = (-1.0) ** np.arange(n + 1)
    b[0] = -np.dot(signs[1:], b[1:])
    return ChebSegment(seg.t_lo, seg.t_hi, b)


def lebesgue_mu(q: int) -> float:
    """Lebesgue constant of first-kind Chebyshev interpolation at ``q`` nodes.

    ``(1/q) sum_{j<q} cot((j + 1/2) pi / (2q))``, which behaves like
    ``(2/pi) log q + 0.9625``.
    """
    q = _check_q(q)
    j = np.arange(q)
    return float(np.sum(1.0 / np.tan((j + 0.5) * np.pi / (2 * q))) / q)


def truncate(seg: ChebSegment, q_new: int) -> ChebSegment:
    """Keep the leading ``q_new`` coefficients."""
    if not isinstance(q_new, (int, np.integer)) or not 1 <= q_new <= seg.q:
        raise InvalidArgument(f"q_new must lie in [1, {seg.q}], got {q_new!r}")
    if q_new == seg.q:
        return seg
    return ChebSegment(seg.t_lo, seg.t_hi, seg.coeffs[:q_new])


def _check_q(q) -> int:
    if not isinstance(q, (int, np.integer)) or isinstance(q, bool) or q < 1:
        raise InvalidArgument(f"q must be a positive integer, got {q!r}")
    return int(q)
