"""Attractor statistics of sampled orbits.

Series are normalised by their standard deviation, delay-embedded with a lag
of one sample, and summarised by false-nearest-neighbour fractions,
correlation dimension and peak-to-peak maps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInput, InsufficientData, InvalidArgument, NumericError
from .trajectory import TimeSeries, Trajectory, _write_columns

__all__ = [
    "CD_RADII",
    "CorrelationFit",
    "PointCloud",
    "correlation_dimension",
    "correlation_fractions",
    "delay_embed",
    "find_peaks",
    "fnn_fraction",
    "lissajou",
    "normalize",
    "peak_to_peak",
    "write_corrfit",
    "write_lissajou",
    "write_p2p",
]

#: the 25 log-spaced radii of the correlation-dimension regression
CD_RADII = np.logspace(-3, -2, 25)
MIN_USABLE_RADII = 5


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        P = np.array(self.points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if P.ndim != 2 or P.shape[0] < 1:
            raise InvalidArgument(f"points must be an N x d array, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise NumericError("point coordinates must be finite")
        P.setflags(write=False)
        object.__setattr__(self, "points", P)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def concatenate(cls, clouds: Sequence["PointCloud"], provenance: str = "") -> "PointCloud":
        if not clouds:
            raise InvalidArgument("nothing to concatenate")
        return cls(np.vstack([c.points for c in clouds]), provenance)


@dataclass(frozen=True, eq=False)
class CorrelationFit:
    """Correlation fractions and, when fitted, the log-log regression line.

    ``dropped`` lists radii whose fraction was zero and were left out of the
    fit.
    """

    radii: np.ndarray
    fractions: np.ndarray
    slope: float = float("nan")
    intercept: float = float("nan")
    residual: float = float("nan")
    dropped: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "dropped_radii": [float(r) for r in self.dropped],
            "n_used": int(self.radii.size - len(self.dropped)),
        }


def _values(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    v = np.asarray(series, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise NumericError("series values must be finite")
    return v


def normalize(series: TimeSeries) -> TimeSeries:
    """Divide by the population standard deviation; the mean is kept."""
    if not isinstance(series, TimeSeries):
        series = TimeSeries.from_values(series)
    v = series.values
    if v.size < 2:
        raise DegenerateInput("need at least two values to normalise")
    sd = float(np.std(v))
    if not sd > 0:
        raise DegenerateInput("series has zero variance")
    return series.with_values(v / sd)


def delay_embed(series, d: int, provenance: str = "") -> PointCloud:
    """Points ``[y_i, y_{i+1}, ..., y_{i+d-1}]`` with a lag of one sample."""
    v = _values(series)
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise InvalidArgument(f"embedding dimension must be a positive integer, got {d!r}")
    if v.size < d:
        raise InvalidArgument(f"series of length {v.size} is shorter than d={d}")
    P = np.lib.stride_tricks.sliding_window_view(v, d)
    return PointCloud(P.copy(), provenance)


def fnn_fraction(series, d: int, R_tol: float = 10.0, A_tol: float = 2.0) -> float:
    """Kennel false-nearest-neighbour fraction at embedding dimension ``d``.

    Only the first ``N - d`` delay vectors have a ``(d+1)``-th coordinate.
    A neighbour is false when the extra coordinate jump exceeds ``R_tol``
    times the ``d``-dimensional distance, or when the ``(d+1)``-dimensional
    distance exceeds ``A_tol`` times the series standard deviation.
    """
    v = _values(series)
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise InvalidArgument(f"embedding dimension must be a positive integer, got {d!r}")
    if v.size < d + 2:
        raise InvalidArgument(f"series of length {v.size} too short for FNN at d={d}")
    n = v.size - d
    P = np.lib.stride_tricks.sliding_window_view(v, d)[:n]
    extra = v[d : d + n]
    tree = cKDTree(P)
    dist, idx = tree.query(P, k=2)
    # with duplicates the first hit may not be the point itself
    self_first = idx[:, 0] == np.arange(n)
    nn = np.where(self_first, idx[:, 1], idx[:, 0])
    R = np.where(self_first, dist[:, 1], dist[:, 0])
    jump = np.abs(extra - extra[nn])
    size = float(np.std(v))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_false = np.where(R > 0, jump / R > R_tol, jump > 0)
    size_false = np.sqrt(R**2 + jump**2) > A_tol * size
    return float(np.mean(ratio_false | size_false))


def correlation_fractions(cloud: PointCloud, radii) -> CorrelationFit:
    """``C_i = 2 #{m < n : |y_m - y_n| < r_i} / (N (N - 1))``, counted exactly."""
    r = np.asarray(radii, dtype=float).reshape(-1)
    if r.size == 0 or np.any(~(r > 0)) or np.any(np.diff(r) <= 0):
        raise InvalidArgument("radii must be positive and strictly increasing")
    P = cloud.points if isinstance(cloud, PointCloud) else PointCloud(cloud).points
    n = P.shape[0]
    if n < 2:
        raise InvalidArgument("need at least two points")
    tree = cKDTree(P)
    # count_neighbors is inclusive, the fraction wants strict inequality
    counts = tree.count_neighbors(tree, np.nextafter(r, 0.0)).astype(np.int64)
    pairs = counts - n
    return CorrelationFit(r, pairs / (n * (n - 1.0)))


def correlation_dimension(cloud: PointCloud, radii=CD_RADII) -> CorrelationFit:
    """Least-squares slope of ``log C`` against ``log r``, zero counts dropped."""
    fit = correlation_fractions(cloud, radii)
    keep = fit.fractions > 0
    if np.count_nonzero(keep) < MIN_USABLE_RADII:
        raise InsufficientData(
            f"only {np.count_nonzero(keep)} of {fit.radii.size} radii have nonzero "
            f"correlation fraction; need {MIN_USABLE_RADII}"
        )
    x = np.log(fit.radii[keep])
    y = np.log(fit.fractions[keep])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ [slope, intercept] - y) ** 2)))
    return CorrelationFit(
        fit.radii,
        fit.fractions,
        float(slope),
        float(intercept),
        resid,
        tuple(float(v) for v in fit.radii[~keep]),
    )


def find_peaks(series: TimeSeries) -> list[tuple[float, float]]:
    """Local maxima ``v[k-1] < v[k] >= v[k+1]`` refined by a 3-point parabola.

    On a plateau (``v[k] == v[k+1]``) the leftmost sample is reported as is.
    """
    if not isinstance(series, TimeSeries):
        series = TimeSeries.from_values(series)
    v = series.values
    if v.size < 3:
        raise InvalidArgument("need at least three samples to find peaks")
    a, b, c = v[:-2], v[1:-1], v[2:]
    k = np.flatnonzero((a < b) & (b >= c))
    a, b, c = a[k], b[k], c[k]
    flat = b == c
    curv = a - 2.0 * b + c
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(flat, 0.0, 0.5 * (a - c) / curv)
        value = np.where(flat, b, b - 0.25 * (a - c) * shift)
    times = series.t0 + series.dt * (k + 1 + shift)
    return [(float(t), float(x)) for t, x in zip(times, value)]


def peak_to_peak(peaks) -> list[tuple[float, float]]:
    """Consecutive peak-value pairs ``(p_k, p_{k+1})``."""
    vals = [p[1] if isinstance(p, (tuple, list, np.ndarray)) else float(p) for p in peaks]
    return list(zip(vals[:-1], vals[1:]))


def lissajou(traj: Trajectory, t0: float, t1: float, rate: float = 100.0) -> np.ndarray:
    """Samples of ``(x(t), x(t - 1))`` for ``t`` in ``[t0, t1]``."""
    if t0 - 1.0 < traj.t_min:
        raise InvalidArgument("window starts less than one time unit after the trajectory")
    s = traj.sample(t0, t1, rate)
    return np.column_stack([s.values, traj.evaluate(s.times - 1.0)])


def write_lissajou(path, pairs) -> None:
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    _write_columns(path, ("x_t", "x_tm1"), pairs.T)


def write_p2p(path, pairs) -> None:
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    _write_columns(path, ("p_k", "p_k1"), pairs.T)


def write_corrfit(directory, fit: CorrelationFit) -> None:
    d = Path(directory)
    _write_columns(d / "corrfit.csv", ("r", "C"), (fit.radii, fit.fractions))
    (d / "cdim.json").write_text(json.dumps(fit.to_dict(), indent=2) + "\n")
