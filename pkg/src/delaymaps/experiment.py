"""Convergence-in-q experiments: ground truth, truncation sweeps, tables.

Directory layout written by :func:`run_experiment`::

    plan.json
    runs/eps_<e>/seed_<s>/q_<q>/   status.json, reports.csv, series.csv,
                                   p2p.csv, lissajou.csv, diagrams.csv,
                                   trajectory.npz
    summary/cd.csv, summary/w1.csv
    tables.csv, tables.md, figures/*.csv

Every run directory is written by exactly one worker. :func:`report` only
reads run directories, so it can be rerun on a partial experiment.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import analysis, tda
from .chebyshev import ChebSegment, interpolate_values
from .errors import (
    BoundExceeded,
    DegenerateInput,
    DomainError,
    InsufficientData,
    InvalidArgument,
    NonContracting,
    NumericError,
)
from .solver import SolverConfig, run
from .systems import SystemSpec, from_config
from .trajectory import TimeSeries, Trajectory, _write_columns

__all__ = [
    "ExperimentPlan",
    "ExperimentResult",
    "default_amplitude",
    "random_history",
    "report",
    "run_experiment",
    "run_single",
]

log = logging.getLogger(__name__)

METRICS = ("Dim.", "H0", "H1", "H2")
RUN_FAILURES = (BoundExceeded, NonContracting, NumericError, DomainError)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def random_history(
    q: int,
    seed: int,
    amplitude: float,
    center: float = 0.0,
    bounds: tuple[float, float] | None = None,
) -> Trajectory:
    """Three half-unit segments on ``[-3/2, 0]`` from random node values.

    Node values are uniform on ``[center - amplitude, center + amplitude]``.
    Each later segment is shifted by a linear ramp that vanishes at its right
    end so it starts exactly where the previous one stopped. With ``bounds``
    the whole draw is repeated (same generator) until a dense grid stays
    inside them.
    """
    if q < 2:
        raise InvalidArgument(f"random histories need q >= 2, got {q!r}")
    if not amplitude > 0:
        raise InvalidArgument(f"amplitude must be positive, got {amplitude!r}")
    rng = np.random.default_rng(seed)
    grid = np.linspace(-1.5, 0.0, 64 * q + 1)
    signs = (-1.0) ** np.arange(q)
    for _ in range(1000):
        segs = []
        end = None
        for i in range(3):
            lo = -1.5 + 0.5 * i
            c = interpolate_values(center + rng.uniform(-amplitude, amplitude, q), lo, lo + 0.5)
            c = c.coeffs.copy()
            if end is not None:
                # T0 and T1 terms of a ramp from the jump at u=-1 to 0 at u=1
                jump = end - float(np.dot(signs, c))
                c[0] += jump / 2.0
                c[1] -= jump / 2.0
            seg = ChebSegment(lo, lo + 0.5, c)
            segs.append(seg)
            end = float(seg(lo + 0.5))
        traj = Trajectory(segs, bound=abs(center) + amplitude)
        if bounds is None:
            return traj
        x = traj(grid)
        if bounds[0] <= x.min() and x.max() <= bounds[1]:
            return traj
    raise InvalidArgument(f"no history within {bounds} after 1000 draws; lower the amplitude")


def default_amplitude(system: dict) -> tuple[float, float]:
    """``(amplitude, center)`` of the random histories for a system config."""
    if system.get("system") == "mackey_glass":
        # random interpolants overshoot their node range about twofold; this
        # keeps roughly half of the draws inside [0, M] with M = 2
        return 0.5, 1.0
    return 0.9, 0.0


def _default_embed_dim(system: dict) -> int:
    if system.get("system") == "mackey_glass" and float(system.get("tau", 2.0)) >= 4:
        return 4
    return 3


@dataclass(frozen=True)
class ExperimentPlan:
    """Declarative description of one convergence study.

    Defaults reproduce the full-scale protocol; :meth:`desk` shrinks it to a
    few minutes of compute.
    """

    system: dict = field(default_factory=lambda: {"system": "cubic_ikeda", "tau": 1.62})
    eps_values: tuple = (0.0,)
    q_truth: int = 17
    q_sweep: tuple = tuple(range(2, 11))
    n_sims: int = 50
    total_steps: int = 21000
    retain_steps: int = 20000
    picard_iters: int = 30
    seeds: tuple | None = None
    amplitude: float | None = None
    center: float | None = None
    sample_rate: float = 1.0
    embed_dim: int | None = None
    cd_group_size: int = 5
    tda_sims: int = 10
    tda_points: int = 1000
    tda_max_dim: int = 2
    wasserstein_p: float = 1.0
    ground_metric: str = "euclidean"
    peak_rate: float = 100.0
    p2p_span: float = 2500.0
    lissajou_span: float = 250.0
    max_retries: int = 3
    save_trajectories: bool = True

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("system", dict(self.system))
        set_("eps_values", tuple(float(e) for e in self.eps_values))
        set_("q_sweep", tuple(int(q) for q in self.q_sweep))
        seeds = tuple(range(self.n_sims)) if self.seeds is None else tuple(int(s) for s in self.seeds)
        if len(seeds) != self.n_sims:
            raise InvalidArgument(f"{len(seeds)} seeds given for n_sims={self.n_sims}")
        if len(set(seeds)) != len(seeds):
            raise InvalidArgument("seeds must be distinct")
        set_("seeds", seeds)
        amp, center = default_amplitude(self.system)
        if self.amplitude is None:
            set_("amplitude", amp)
        if self.center is None:
            set_("center", center)
        if self.embed_dim is None:
            set_("embed_dim", _default_embed_dim(self.system))
        if self.q_sweep and self.q_truth <= max(self.q_sweep):
            raise InvalidArgument("q_truth must exceed every q in q_sweep")
        if min(self.q_sweep, default=2) < 2 or self.q_truth < 2:
            raise InvalidArgument("node counts must be >= 2")
        if not 0 < self.retain_steps <= self.total_steps:
            raise InvalidArgument("need 0 < retain_steps <= total_steps")
        if not self.eps_values:
            raise InvalidArgument("eps_values is empty")
        if self.cd_group_size < 1 or self.tda_sims < 0 or self.tda_points < 2:
            raise InvalidArgument("invalid analysis sizes")
        if self.tda_max_dim not in (0, 1, 2):
            raise InvalidArgument("tda_max_dim must be 0, 1 or 2")
        from_config(self.system)

    @classmethod
    def desk(cls, **overrides) -> "ExperimentPlan":
        """10 simulations of 4200 half-steps, CD groups of 2, 400-point TDA clouds."""
        base = dict(
            n_sims=10, total_steps=4200, retain_steps=4000, cd_group_size=2, tda_points=400
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def full(cls, **overrides) -> "ExperimentPlan":
        """50 simulations of 21000 half-steps, CD groups of 5, 1000-point TDA clouds."""
        return cls(**overrides)

    def replace(self, **changes) -> "ExperimentPlan":
        if "n_sims" in changes and "seeds" not in changes:
            changes["seeds"] = None
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("eps_values", "q_sweep", "seeds"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        data = dict(data)
        preset = data.pop("preset", None)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidArgument(f"unknown plan keys: {sorted(unknown)}")
        if preset == "desk":
            return cls.desk(**data)
        if preset not in (None, "full"):
            raise InvalidArgument(f"unknown preset {preset!r}")
        return cls(**data)

    @property
    def q_values(self) -> tuple:
        return (self.q_truth,) + self.q_sweep

    @property
    def tda_seeds(self) -> tuple:
        return self.seeds[: self.tda_sims]

    def spec(self, eps: float) -> SystemSpec:
        return from_config({**self.system, "eps": eps})

    def history(self, spec: SystemSpec, seed: int) -> Trajectory:
        bounds = (max(-spec.M, spec.state_min), spec.M)
        return random_history(self.q_truth, seed, self.amplitude, self.center, bounds)


def _run_dir(root: Path, eps: float, seed: int, q: int) -> Path:
    return root / "runs" / f"eps_{eps:g}" / f"seed_{seed}" / f"q_{q}"


def _embedded(series: TimeSeries, d: int) -> analysis.PointCloud:
    return analysis.delay_embed(analysis.normalize(series), d)


def run_single(plan: ExperimentPlan, eps: float, seed: int, q: int, out: Path) -> dict:
    """Simulate one (eps, seed, q) cell and write its run directory."""
    out.mkdir(parents=True, exist_ok=True)
    spec = plan.spec(eps)
    history = plan.history(spec, seed)
    if q < plan.q_truth:
        history = history.truncated(q)
    cfg = SolverConfig(q=q, picard_iters=plan.picard_iters, n_steps=plan.total_steps)
    status = {"eps": eps, "seed": seed, "q": q}
    for attempt in range(plan.max_retries + 1):
        try:
            traj, reports = run(history, spec, cfg)
            break
        except BoundExceeded as exc:
            if attempt == plan.max_retries:
                return _fail(out, status, exc, spec.M)
            log.info("run eps=%g seed=%d q=%d: %s; retrying with M=%g", eps, seed, q, exc, 2 * spec.M)
            spec = spec.replace(M=2 * spec.M)
        except RUN_FAILURES as exc:
            return _fail(out, status, exc, spec.M)
    status.update(status="ok", M=spec.M, attempts=attempt + 1)

    t_end = traj.t_max
    t_start = t_end - plan.retain_steps / 2
    _write_columns(
        out / "reports.csv",
        ("step", "iters", "residual", "ratio", "maxabs"),
        np.array([r.row() for r in reports]).T,
    )
    series = traj.sample(t_start, t_end, plan.sample_rate)
    series.to_csv(out / "series.csv")
    fine = traj.sample(t_start, min(t_start + plan.p2p_span, t_end), plan.peak_rate)
    analysis.write_p2p(out / "p2p.csv", analysis.peak_to_peak(analysis.find_peaks(fine)))
    analysis.write_lissajou(
        out / "lissajou.csv",
        analysis.lissajou(traj, t_start, min(t_start + plan.lissajou_span, t_end), plan.peak_rate),
    )
    if seed in plan.tda_seeds:
        try:
            cloud = _embedded(series, plan.embed_dim)
            sub = tda.subsample(cloud, min(plan.tda_points, len(cloud)), seed=1000 * seed + q)
            tda.write_diagrams(out / "diagrams.csv", tda.rips_persistence(sub, plan.tda_max_dim))
        except DegenerateInput:
            # a constant series is a single point: every diagram is empty
            tda.write_diagrams(
                out / "diagrams.csv",
                [tda.PersistenceDiagram(k, []) for k in range(plan.tda_max_dim + 1)],
            )
    if plan.save_trajectories:
        traj.save(out / "trajectory.npz", metadata=status)
    (out / "status.json").write_text(json.dumps(status, indent=2) + "\n")
    return status


def _fail(out: Path, status: dict, exc: Exception, M: float) -> dict:
    status.update(status="failed", M=M, error=type(exc).__name__, message=str(exc))
    log.warning("run eps=%g seed=%d q=%d failed: %s", status["eps"], status["seed"], status["q"], exc)
    (out / "status.json").write_text(json.dumps(status, indent=2) + "\n")
    return status


def _run_job(args):
    plan, eps, seed, q, out = args
    return run_single(plan, eps, seed, q, out)


@dataclass(frozen=True)
class ExperimentResult:
    directory: Path
    n_ok: int
    n_failed: int

    @property
    def partial(self) -> bool:
        return self.n_failed > 0


def run_experiment(plan: ExperimentPlan, out, workers: int = 1) -> ExperimentResult:
    """Run every (eps, seed, q) cell, then :func:`report` on the directory."""
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    (root / "plan.json").write_text(json.dumps(plan.to_dict(), indent=2) + "\n")
    jobs = [
        (plan, eps, seed, q, _run_dir(root, eps, seed, q))
        for eps in plan.eps_values
        for seed in plan.seeds
        for q in plan.q_values
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            statuses = list(pool.map(_run_job, jobs))
    else:
        statuses = [_run_job(j) for j in jobs]
    n_ok = sum(s["status"] == "ok" for s in statuses)
    report(root)
    return ExperimentResult(root, n_ok, len(statuses) - n_ok)


# -- report ------------------------------------------------------------------


def _status(run_dir: Path) -> bool:
    f = run_dir / "status.json"
    return f.exists() and json.loads(f.read_text()).get("status") == "ok"


def _cd_values(plan, root, eps, q) -> list[tuple[int, float]]:
    """Correlation dimension of each group of concatenated clouds."""
    out = []
    g = plan.cd_group_size
    for gi in range(len(plan.seeds) // g):
        group = plan.seeds[gi * g : (gi + 1) * g]
        dirs = [_run_dir(root, eps, s, q) for s in group]
        if not all(_status(d) for d in dirs):
            continue
        clouds = []
        for d in dirs:
            series = TimeSeries.from_csv(d / "series.csv")
            try:
                clouds.append(_embedded(series, plan.embed_dim))
            except DegenerateInput:
                clouds.append(analysis.delay_embed(series, plan.embed_dim))
        cloud = analysis.PointCloud.concatenate(clouds)
        try:
            slope = analysis.correlation_dimension(cloud).slope
        except InsufficientData as exc:
            log.warning("CD eps=%g q=%d group %d: %s", eps, q, gi, exc)
            continue
        out.append((gi, slope))
    return out


def _diagrams(plan, root, eps, q) -> dict[int, list]:
    found = {}
    for s in plan.tda_seeds:
        f = _run_dir(root, eps, s, q) / "diagrams.csv"
        if _status(f.parent) and f.exists():
            dg = tda.read_diagrams(f)
            found[s] = [
                dg[k] if k < len(dg) else tda.PersistenceDiagram(k, [])
                for k in range(plan.tda_max_dim + 1)
            ]
    return found


def _w1_values(plan, root, eps) -> list[tuple]:
    """Rows ``(label, k, seed_a, seed_b, W)``; label is a q or ``baseline``."""
    rows = []
    truth = _diagrams(plan, root, eps, plan.q_truth)
    seeds = sorted(truth)
    for k in range(plan.tda_max_dim + 1):
        for i, a in enumerate(seeds):
            for b in seeds[i + 1 :]:
                w = tda.wasserstein(truth[a][k], truth[b][k], plan.wasserstein_p, plan.ground_metric)
                rows.append(("baseline", k, a, b, w))
    for q in plan.q_sweep:
        approx = _diagrams(plan, root, eps, q)
        for k in range(plan.tda_max_dim + 1):
            for a in sorted(approx):
                for b in seeds:
                    w = tda.wasserstein(approx[a][k], truth[b][k], plan.wasserstein_p, plan.ground_metric)
                    rows.append((q, k, a, b, w))
    return rows


def _median_iqr(values) -> tuple[float, float] | None:
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return None
    q25, q75 = np.percentile(v, [25, 75])
    return float(np.median(v)), float(q75 - q25)


def report(directory) -> Path:
    """Summarise an experiment directory into ``tables.csv`` and figure data."""
    root = Path(directory)
    plan_file = root / "plan.json"
    if not plan_file.exists():
        raise InvalidArgument(f"{root} holds no experiment (plan.json missing)")
    plan = ExperimentPlan.from_dict(json.loads(plan_file.read_text()))
    summary = root / "summary"
    figures = root / "figures"
    summary.mkdir(exist_ok=True)
    figures.mkdir(exist_ok=True)

    cd_rows, w1_rows = [], []
    cells: dict[tuple, tuple | None] = {}
    for eps in plan.eps_values:
        cds = {q: _cd_values(plan, root, eps, q) for q in plan.q_values}
        for q, vals in cds.items():
            cd_rows += [(eps, q, g, v) for g, v in vals]
        w1 = _w1_values(plan, root, eps)
        w1_rows += [(eps,) + r for r in w1]
        for q in plan.q_sweep:
            cells[(eps, "Dim.", q)] = _median_iqr(v for _, v in cds[q])
        cells[(eps, "Dim.", "baseline")] = _median_iqr(v for _, v in cds[plan.q_truth])
        for k in range(plan.tda_max_dim + 1):
            for label in plan.q_sweep + ("baseline",):
                cells[(eps, f"H{k}", label)] = _median_iqr(
                    r[4] for r in w1 if r[0] == label and r[1] == k
                )
        _figures(plan, root, figures, eps)

    _write_rows(summary / "cd.csv", ("eps", "q", "group", "cd"), cd_rows)
    _write_rows(summary / "w1.csv", ("eps", "q", "k", "seed_a", "seed_b", "w1"), w1_rows)
    labels = plan.q_sweep + ("baseline",)
    header = ["eps", "metric"]
    for label in labels:
        name = f"q{label}" if label != "baseline" else label
        header += [f"{name}_median", f"{name}_iqr"]
    csv_lines = [",".join(header)]
    md_lines = [
        "| eps | metric | " + " | ".join(str(l) for l in labels) + " |",
        "|---" * (len(labels) + 2) + "|",
    ]
    for eps in plan.eps_values:
        for metric in METRICS:
            row, md = [_fmt(eps), metric], [f"{eps:g}", metric]
            for label in labels:
                cell = cells.get((eps, metric, label))
                if cell is None:
                    row += ["-", "-"]
                    md.append("-")
                else:
                    row += [_fmt(cell[0]), _fmt(cell[1])]
                    md.append(f"{cell[0]:.2f} ({cell[1]:.1f})")
            csv_lines.append(",".join(row))
            md_lines.append("| " + " | ".join(md) + " |")
    (root / "tables.csv").write_text("\n".join(csv_lines) + "\n")
    (root / "tables.md").write_text("\n".join(md_lines) + "\n")
    return root / "tables.csv"


def _write_rows(path: Path, header: Iterable[str], rows) -> None:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_fmt(x) if isinstance(x, float) else str(x) for x in r))
    path.write_text("\n".join(lines) + "\n")


def _figures(plan, root, figures, eps) -> None:
    """Copy the Lissajou and peak-to-peak data of the first successful seed."""
    for q in plan.q_values:
        for s in plan.seeds:
            d = _run_dir(root, eps, s, q)
            if _status(d):
                shutil.copyfile(d / "p2p.csv", figures / f"p2p_eps{eps:g}_q{q}.csv")
                if q == plan.q_truth:
                    shutil.copyfile(d / "lissajou.csv", figures / f"lissajou_eps{eps:g}.csv")
                break
