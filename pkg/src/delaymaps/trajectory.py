"""Piecewise-Chebyshev trajectories and uniformly sampled time series.

A :class:`Trajectory` is an immutable chain of contiguous :class:`ChebSegment`
pieces. It is both the history function fed to a solver step and the orbit the
solver returns. Appending returns a new trajectory; the coefficient storage is
shared between versions as long as nobody appends to an older one, so growing
an orbit one half-step at a time costs amortised O(1) per step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .chebyshev import CLAMP_TOL, ChebSegment, clenshaw, truncate
from .errors import ConsistencyError, DomainError, InvalidArgument, NumericError

__all__ = ["CONTINUITY_RTOL", "TimeSeries", "Trajectory"]

#: Relative jump allowed at knots, scaled by ``1 + M``.
CONTINUITY_RTOL = 1e-9


class _Store:
    """Append-only columnar storage shared by several trajectory versions."""

    def __init__(self, capacity: int, width: int):
        capacity = max(capacity, 4)
        self.lo = np.empty(capacity)
        self.hi = np.empty(capacity)
        self.q = np.empty(capacity, dtype=np.int64)
        self.coeffs = np.zeros((capacity, width))
        self.n = 0

    @property
    def width(self) -> int:
        return self.coeffs.shape[1]

    def copy_prefix(self, n: int, extra: int = 1) -> "_Store":
        new = _Store(max(2 * n, n + extra), self.width)
        new.lo[:n] = self.lo[:n]
        new.hi[:n] = self.hi[:n]
        new.q[:n] = self.q[:n]
        new.coeffs[:n] = self.coeffs[:n]
        new.n = n
        return new

    def push(self, seg: ChebSegment) -> None:
        if self.n == self.lo.size:
            self._grow(2 * self.n, self.width)
        if seg.q > self.width:
            self._grow(self.lo.size, seg.q)
        i = self.n
        self.lo[i], self.hi[i], self.q[i] = seg.t_lo, seg.t_hi, seg.q
        self.coeffs[i, : seg.q] = seg.coeffs
        self.coeffs[i, seg.q :] = 0.0
        self.n += 1

    def _grow(self, capacity: int, width: int) -> None:
        n = self.n
        lo, hi, q, c = self.lo, self.hi, self.q, self.coeffs
        self.lo = np.empty(capacity)
        self.hi = np.empty(capacity)
        self.q = np.empty(capacity, dtype=np.int64)
        self.coeffs = np.zeros((capacity, width))
        self.lo[:n], self.hi[:n], self.q[:n] = lo[:n], hi[:n], q[:n]
        self.coeffs[:n, : c.shape[1]] = c[:n]


class Trajectory:
    """Contiguous sequence of Chebyshev segments.

    Args:
        segments: pieces in chronological order; each must start exactly where
            the previous one ends.
        check_continuity: also require values to agree at knots within
            ``CONTINUITY_RTOL * (1 + bound)``. Truncated histories are the one
            place where this is switched off.
        bound: the a-priori orbit bound ``M`` used to scale the tolerance.
    """

    __slots__ = ("_store", "_n")

    def __init__(
        self,
        segments: Iterable[ChebSegment],
        *,
        check_continuity: bool = True,
        bound: float = 1.0,
    ):
        segments = list(segments)
        if not segments:
            raise InvalidArgument("a trajectory needs at least one segment")
        store = _Store(len(segments), max(s.q for s in segments))
        store.push(segments[0])
        for prev, seg in zip(segments, segments[1:]):
            _check_join(prev.t_hi, float(prev(prev.t_hi)), seg, check_continuity, bound)
            store.push(seg)
        self._store = store
        self._n = len(segments)

    @classmethod
    def _view(cls, store: _Store, n: int) -> "Trajectory":
        obj = cls.__new__(cls)
        obj._store = store
        obj._n = n
        return obj

    # -- structure ---------------------------------------------------------

    def __len__(self) -> int:
        return self._n

    def __iter__(self):
        return (self.segment(i) for i in range(self._n))

    def __repr__(self):
        return f"Trajectory([{self.t_min!r}, {self.t_max!r}], segments={self._n})"

    @property
    def t_min(self) -> float:
        return float(self._store.lo[0])

    @property
    def t_max(self) -> float:
        return float(self._store.hi[self._n - 1])

    @property
    def knots(self) -> np.ndarray:
        """All segment boundaries, ``len(self) + 1`` values."""
        s = self._store
        return np.append(s.lo[: self._n], s.hi[self._n - 1])

    @property
    def segments(self) -> list[ChebSegment]:
        return list(self)

    def segment(self, i: int) -> ChebSegment:
        if i < 0:
            i += self._n
        if not 0 <= i < self._n:
            raise IndexError(i)
        s = self._store
        return ChebSegment(s.lo[i], s.hi[i], s.coeffs[i, : s.q[i]])

    def locate(self, t) -> np.ndarray:
        """Index of the covering segment; at an interior knot the right one wins."""
        t = np.asarray(t, dtype=float)
        self._check_range(t)
        idx = np.searchsorted(self._store.lo[: self._n], t, side="right") - 1
        return np.clip(idx, 0, self._n - 1)

    # -- evaluation --------------------------------------------------------

    def evaluate(self, t):
        """Value at ``t`` (scalar or array)."""
        t = np.asarray(t, dtype=float)
        idx = self.locate(t)
        s = self._store
        lo, hi = s.lo[idx], s.hi[idx]
        u = np.clip(2.0 * (t - lo) / (hi - lo) - 1.0, -1.0, 1.0)
        out = clenshaw(s.coeffs[idx], u)
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def sample(self, t0: float, t1: float, rate: float) -> "TimeSeries":
        """Samples ``x(t0 + k / rate)`` for ``k = 0 .. floor((t1 - t0) rate)``."""
        if not rate > 0:
            raise InvalidArgument(f"rate must be positive, got {rate!r}")
        if t1 < t0:
            raise InvalidArgument(f"empty window [{t0}, {t1}]")
        self._check_range(np.array([t0, t1]))
        n = int(math.floor((t1 - t0) * rate + 1e-9)) + 1
        t = t0 + np.arange(n) / rate
        return TimeSeries(t0, 1.0 / rate, self.evaluate(np.minimum(t, t1)))

    def max_jump(self) -> float:
        """Largest value discontinuity across interior knots."""
        if self._n < 2:
            return 0.0
        s, n = self._store, self._n
        right_end = clenshaw(s.coeffs[: n - 1], np.ones(n - 1))
        left_end = clenshaw(s.coeffs[1:n], -np.ones(n - 1))
        return float(np.max(np.abs(right_end - left_end)))

    # -- construction ------------------------------------------------------

    def append(self, seg: ChebSegment, *, bound: float = 1.0) -> "Trajectory":
        """New trajectory extended by ``seg``; ``self`` is left untouched."""
        _check_join(self.t_max, self._end_value(), seg, True, bound)
        store = self._store
        if store.n != self._n:
            store = store.copy_prefix(self._n)
        store.push(seg)
        return Trajectory._view(store, self._n + 1)

    def extend(self, segments: Iterable[ChebSegment], *, bound: float = 1.0):
        traj = self
        for seg in segments:
            traj = traj.append(seg, bound=bound)
        return traj

    def truncated(self, q: int) -> "Trajectory":
        """Every segment cut to its leading ``q`` coefficients.

        Truncation moves segment end values independently, so the result is not
        required to be continuous at knots.
        """
        return Trajectory((truncate(s, min(q, s.q)) for s in self), check_continuity=False)

    def window(self, t0: float, t1: float) -> "Trajectory":
        """Segments overlapping ``(t0, t1)``, kept whole."""
        lo = self._store.lo[: self._n]
        hi = self._store.hi[: self._n]
        keep = np.flatnonzero((hi > t0) & (lo < t1))
        if keep.size == 0:
            raise DomainError(f"no segment overlaps [{t0}, {t1}]")
        return Trajectory((self.segment(int(i)) for i in keep), check_continuity=False)

    # -- files -------------------------------------------------------------

    def to_dict(self, metadata: dict | None = None) -> dict:
        return {
            "metadata": dict(metadata or {}),
            "segments": [seg.to_dict() for seg in self],
        }

    @classmethod
    def from_dict(cls, data, *, check_continuity: bool = False) -> "Trajectory":
        if isinstance(data, dict):
            data = data["segments"]
        return cls((ChebSegment.from_dict(d) for d in data), check_continuity=check_continuity)

    def save(self, path, metadata: dict | None = None) -> None:
        """Write JSON, or a compact binary archive when ``path`` ends in ``.npz``."""
        path = Path(path)
        if path.suffix == ".npz":
            s, n = self._store, self._n
            with open(path, "wb") as fh:
                np.savez_compressed(
                    fh,
                    t_lo=s.lo[:n],
                    t_hi=s.hi[:n],
                    q=s.q[:n],
                    coeffs=s.coeffs[:n],
                    metadata=np.array(json.dumps(dict(metadata or {}))),
                )
        else:
            path.write_text(json.dumps(self.to_dict(metadata)))

    @classmethod
    def load(cls, path) -> tuple["Trajectory", dict]:
        path = Path(path)
        if path.suffix == ".npz":
            with np.load(path) as z:
                segs = [
                    ChebSegment(lo, hi, c[:q])
                    for lo, hi, q, c in zip(z["t_lo"], z["t_hi"], z["q"], z["coeffs"])
                ]
                meta = json.loads(str(z["metadata"]))
            return cls(segs, check_continuity=False), meta
        data = json.loads(path.read_text())
        return cls.from_dict(data), data.get("metadata", {})

    # -- internals ---------------------------------------------------------

    def _end_value(self) -> float:
        s = self._store
        return float(clenshaw(s.coeffs[self._n - 1], 1.0))

    def _check_range(self, t: np.ndarray) -> None:
        lo, hi = self.t_min, self.t_max
        if not np.all(np.isfinite(t)):
            raise NumericError(f"non-finite evaluation time {t[~np.isfinite(t)].flat[0]!r}")
        if t.size and (np.min(t) < lo - CLAMP_TOL or np.max(t) > hi + CLAMP_TOL):
            bad = t[(t < lo - CLAMP_TOL) | (t > hi + CLAMP_TOL)].flat[0]
            raise DomainError(f"t={bad!r} outside trajectory [{lo!r}, {hi!r}]")


def _check_join(t_end: float, v_end: float, seg: ChebSegment, check_value: bool, bound: float):
    if seg.t_lo != t_end:
        raise ConsistencyError(f"segment starts at {seg.t_lo!r}, trajectory ends at {t_end!r}")
    if check_value:
        jump = abs(float(seg(seg.t_lo)) - v_end)
        if jump > CONTINUITY_RTOL * (1.0 + bound):
            raise ConsistencyError(f"value jump {jump:.3e} at knot t={t_end!r}")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniform samples ``values[k] = x(t0 + k dt)``."""

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgument(f"dt must be positive, got {self.dt!r}")
        v = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise NumericError("time series values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @classmethod
    def from_values(cls, values: Sequence[float], dt: float = 1.0, t0: float = 0.0):
        return cls(t0, dt, values)

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.t0, self.dt, values)

    def to_csv(self, path) -> None:
        _write_columns(path, ("t", "x"), (self.times, self.values))

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t, x = data[:, 0], data[:, 1]
        dt = float(t[1] - t[0]) if t.size > 1 else 1.0
        return cls(float(t[0]), dt, x)


def _write_columns(path, header, columns) -> None:
    cols = [np.asarray(c, dtype=float) for c in columns]
    lines = [",".join(header)]
    lines += [",".join(f"{v:.17g}" for v in row) for row in zip(*cols)]
    Path(path).write_text("\n".join(lines) + "\n")
