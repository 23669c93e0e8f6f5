"""Command-line entry point: ``delaymaps {simulate,sweep,analyze,ph,report}``.

Exit status is 0 on success, 2 when some runs of a sweep failed and were
recorded as missing cells, and 1 on a fatal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, tda
from .errors import DelayMapError
from .experiment import ExperimentPlan, report, run_experiment, run_single
from .trajectory import TimeSeries, Trajectory, _write_columns

log = logging.getLogger("delaymaps")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _load_plan(args) -> ExperimentPlan:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    if getattr(args, "preset", None):
        data["preset"] = args.preset
    overrides = {
        "n_sims": args.n_sims,
        "total_steps": args.total_steps,
        "retain_steps": args.retain_steps,
        "picard_iters": args.picard_iters,
        "q_truth": args.q,
        "tda_max_dim": args.tda_max_dim,
        "tda_points": args.tda_points,
        "tda_sims": args.tda_sims,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.eps is not None:
        data["eps_values"] = list(_floats(args.eps))
    if args.q_sweep is not None:
        data["q_sweep"] = list(_ints(args.q_sweep))
    if args.system is not None:
        data["system"] = json.loads(args.system)
    if args.seed is not None:
        n = data.get("n_sims")
        if n is None:
            n = (ExperimentPlan.desk() if data.get("preset") == "desk" else ExperimentPlan()).n_sims
        data["seeds"] = list(range(args.seed, args.seed + n))
    elif args.n_sims is not None:
        data.pop("seeds", None)
    return ExperimentPlan.from_dict(data)


def _add_plan_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON plan file")
    p.add_argument("--preset", choices=("desk", "full"))
    p.add_argument("--system", help='system JSON, e.g. \'{"system": "cubic_ikeda", "tau": 1.62}\'')
    p.add_argument("--seed", type=int, help="first seed; seeds are consecutive")
    p.add_argument("--q", type=int, help="ground-truth node count")
    p.add_argument("--eps", help="comma-separated state-dependence values")
    p.add_argument("--q-sweep", dest="q_sweep", help="comma-separated node counts")
    p.add_argument("--n-sims", dest="n_sims", type=int)
    p.add_argument("--total-steps", dest="total_steps", type=int)
    p.add_argument("--retain-steps", dest="retain_steps", type=int)
    p.add_argument("--picard-iters", dest="picard_iters", type=int)
    p.add_argument("--tda-max-dim", dest="tda_max_dim", type=int)
    p.add_argument("--tda-points", dest="tda_points", type=int)
    p.add_argument("--tda-sims", dest="tda_sims", type=int)
    p.add_argument("--out", required=True, help="output directory")


def cmd_simulate(args) -> int:
    plan = _load_plan(args)
    eps = plan.eps_values[0]
    seed = plan.seeds[0]
    status = run_single(plan, eps, seed, plan.q_truth, Path(args.out))
    print(json.dumps(status))
    return EXIT_OK if status["status"] == "ok" else EXIT_PARTIAL


def cmd_sweep(args) -> int:
    plan = _load_plan(args)
    result = run_experiment(plan, args.out, workers=args.workers)
    print(f"{result.n_ok} runs ok, {result.n_failed} failed; tables in {result.directory / 'tables.csv'}")
    return EXIT_PARTIAL if result.partial else EXIT_OK


def _read_series(path: Path, rate: float) -> TimeSeries:
    if path.suffix in (".npz", ".json"):
        traj, _ = Trajectory.load(path)
        return traj.sample(traj.t_min, traj.t_max, rate)
    return TimeSeries.from_csv(path)


def cmd_analyze(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series = _read_series(Path(args.input), args.rate)
    norm = analysis.normalize(series)
    fnn = {d: analysis.fnn_fraction(norm, d, args.r_tol, args.a_tol) for d in range(1, args.max_fnn_dim + 1)}
    (out / "fnn.json").write_text(json.dumps({str(k): v for k, v in fnn.items()}, indent=2) + "\n")
    fit = analysis.correlation_dimension(analysis.delay_embed(norm, args.d))
    analysis.write_corrfit(out, fit)
    analysis.write_p2p(out / "p2p.csv", analysis.peak_to_peak(analysis.find_peaks(series)))
    print(json.dumps({"cd": fit.slope, "fnn": fnn}))
    return EXIT_OK


def cmd_ph(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = Path(args.input)
    if args.d:
        cloud = analysis.delay_embed(analysis.normalize(_read_series(path, 1.0)), args.d)
    else:
        cloud = analysis.PointCloud(np.loadtxt(path, delimiter=",", ndmin=2))
    if args.points and args.points < len(cloud):
        cloud = tda.subsample(cloud, args.points, args.seed)
    dgms = tda.rips_persistence(cloud, args.max_dim, args.threshold)
    tda.write_diagrams(out / "diagrams.csv", dgms)
    result = {f"H{d.k}": len(d) for d in dgms}
    if args.compare:
        other = tda.read_diagrams(args.compare)
        ks = range(min(len(other), len(dgms)))
        w = [tda.wasserstein(dgms[k], other[k], args.p) for k in ks]
        _write_columns(out / "w1.csv", ("k", "w"), (list(ks), w))
        result["w"] = w
    print(json.dumps(result))
    return EXIT_OK


def cmd_report(args) -> int:
    path = report(args.out)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delaymaps", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one ground-truth run")
    _add_plan_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="full plan: truth, truncation sweep, tables")
    _add_plan_flags(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="FNN, correlation dimension and peaks of one series")
    p.add_argument("input", help="series CSV (t,x) or trajectory file")
    p.add_argument("--d", type=int, default=3, help="embedding dimension")
    p.add_argument("--rate", type=float, default=1.0, help="samples per unit for trajectories")
    p.add_argument("--r-tol", dest="r_tol", type=float, default=10.0)
    p.add_argument("--a-tol", dest="a_tol", type=float, default=2.0)
    p.add_argument("--max-fnn-dim", dest="max_fnn_dim", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ph", help="persistence diagrams of a cloud or embedded series")
    p.add_argument("input", help="point CSV without header, or series with --d")
    p.add_argument("--d", type=int, help="delay-embed a series at this dimension")
    p.add_argument("--max-dim", dest="max_dim", type=int, default=2)
    p.add_argument("--threshold", type=float)
    p.add_argument("--points", type=int, help="random subsample size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--compare", help="diagram CSV to compute W_p against")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ph)

    p = sub.add_parser("report", help="rebuild tables of an experiment directory")
    p.add_argument("--out", required=True, help="experiment directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (DelayMapError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
