"""End-to-end acceptance checks at their stated tolerances.

Each check prints one ``criterion N: PASS|FAIL`` line with the measured
numbers; the lines are repeated in the pytest terminal summary. The desk
experiments take roughly twenty minutes on one core.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from delaymaps import analysis, tda
from delaymaps import chebyshev as cheb
from delaymaps.chebyshev import ChebSegment, interpolate
from delaymaps.experiment import ExperimentPlan, random_history, run_experiment
from delaymaps.solver import SolverConfig, contraction_ratio, run
from delaymaps.systems import compute_constants, cubic_ikeda, custom
from delaymaps.tda import FilteredComplex, PersistenceDiagram, rips_persistence, wasserstein
from delaymaps.trajectory import TimeSeries, Trajectory

from conftest import VERDICTS
from oracles import MethodOfSteps, exhaustive_wasserstein

pytestmark = pytest.mark.slow

IKEDA = cubic_ikeda(1.62, 0.0, 2.0)


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def constant_history(c, q):
    return Trajectory([ChebSegment.constant(c, -1.5 + 0.5 * i, -1.0 + 0.5 * i, q) for i in range(3)])


def anchored(coeffs, z0):
    seg = ChebSegment(0.0, 0.5, coeffs)
    c = np.array(coeffs, dtype=float)
    c[0] += z0 - seg(0.0)
    return ChebSegment(0.0, 0.5, c)


def read_table(root):
    """``{metric: {label: (median, iqr) | None}}`` from ``tables.csv``."""
    lines = (root / "tables.csv").read_text().splitlines()
    header = lines[0].split(",")
    labels = [h[: -len("_median")] for h in header[2::2]]
    out = {}
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for i, label in enumerate(labels):
            med, iqr = cells[2 + 2 * i], cells[3 + 2 * i]
            key = "baseline" if label == "baseline" else int(label[1:])
            row[key] = None if med == "-" else (float(med), float(iqr))
        out[cells[1]] = row
    return out


def truth_series(root, plan, seed, eps=0.0):
    return TimeSeries.from_csv(root / "runs" / f"eps_{eps:g}" / f"seed_{seed}" / f"q_{plan.q_truth}" / "series.csv")


@pytest.fixture(scope="module")
def ikeda_desk(tmp_path_factory):
    plan = ExperimentPlan.desk()
    root = tmp_path_factory.mktemp("ikeda_desk")
    t0 = time.perf_counter()
    result = run_experiment(plan, root)
    return plan, root, result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def mackey_glass_desk(tmp_path_factory):
    system = {"system": "mackey_glass", "tau": 2.0, "beta": 2.0, "n": 9.65, "a": 1.0}
    plan = ExperimentPlan.desk(system=system, tda_sims=0)
    root = tmp_path_factory.mktemp("mg_desk")
    result = run_experiment(plan, root)
    return plan, root, result


class TestAcceptance:
    def test_01_interpolation_bound(self):
        t0 = time.perf_counter()
        g = lambda t: np.sin(8 * t)  # noqa: E731
        t = np.linspace(0.0, 0.5, 20001)
        worst = []
        for q in (2, 4, 8, 16, 32):
            err = np.max(np.abs(interpolate(g, q, 0.0, 0.5)(t) - g(t)))
            bound = (1 + cheb.lebesgue_mu(q)) / (4 * q) * 8.0
            worst.append(err / bound)
        elapsed = time.perf_counter() - t0
        ok = max(worst) <= 1.0 and elapsed < 1.0
        verdict(1, ok, f"max err/bound = {max(worst):.3g}, {elapsed:.2f} s")

    def test_02_contraction(self):
        t0 = time.perf_counter()
        c = compute_constants(IKEDA)
        rng = np.random.default_rng(2025)
        worst = 0.0
        for i in range(100):
            z = random_history(17, 500 + i, 0.9, bounds=(-IKEDA.M, IKEDA.M))
            spec = IKEDA.replace(eps=float(rng.uniform(-1, 1)) * c.eps0)
            w1, w2 = (anchored(rng.normal(size=17) / np.arange(1, 18) ** 2, z(0.0)) for _ in range(2))
            worst = max(worst, contraction_ratio(z, spec, SolverConfig(), w1, w2))
        elapsed = time.perf_counter() - t0
        verdict(2, worst <= 0.5 and elapsed < 10, f"max ratio = {worst:.3g}, eps0 = {c.eps0:.4g}, {elapsed:.1f} s")

    def test_03_method_of_steps(self):
        t0 = time.perf_counter()
        z = constant_history(0.5, 17)
        traj, _ = run(z, IKEDA, SolverConfig(q=17, n_steps=100))
        oracle = MethodOfSteps(IKEDA.F, IKEDA.tau, z, nodes=20).advance(100)
        t = np.linspace(0.0, 50.0, 2001)
        gap = max(abs(traj(ti) - oracle(ti)) for ti in t)
        elapsed = time.perf_counter() - t0
        verdict(3, gap <= 1e-8 and elapsed < 30, f"sup gap = {gap:.3g} over 50 units, {elapsed:.1f} s")

    def test_04_friction_exactness(self):
        t0 = time.perf_counter()
        spec = custom("zero", tau=2.0, a=1.0)
        traj, _ = run(constant_history(1.0, 17), spec, SolverConfig(q=17, n_steps=4))
        t = np.linspace(0.0, 2.0, 4001)
        err = np.max(np.abs(traj(t) - np.exp(-2.0 * t)))
        elapsed = time.perf_counter() - t0
        budget = (1 + cheb.lebesgue_mu(17)) / (4 * 17) * 2.0
        verdict(4, err <= 1e-12 and err <= budget and elapsed < 1, f"sup error = {err:.3g}, {elapsed:.2f} s")

    def test_05_ikeda_ground_truth(self, ikeda_desk):
        plan, root, result, elapsed = ikeda_desk
        med, iqr = read_table(root)["Dim."]["baseline"]
        ok = 1.79 <= med <= 2.09 and elapsed < 600
        verdict(5, ok, f"median CD = {med:.3f} (IQR {iqr:.2f}), whole desk sweep {elapsed / 60:.1f} min")

    def test_06_q_sweep_stabilization(self, ikeda_desk):
        plan, root, result, elapsed = ikeda_desk
        dim = read_table(root)["Dim."]
        base = dim["baseline"][0]
        low = dim[2][0]
        gaps = {q: abs(dim[q][0] - base) for q in range(4, 11)}
        worst = max(gaps, key=gaps.get)
        ok = low <= 0.5 and gaps[worst] <= 0.1 and elapsed < 1800
        verdict(6, ok, f"CD(q=2) = {low:.3f}; max |CD(q) - CD(17)| = {gaps[worst]:.3f} at q={worst}")

    def test_07_fnn(self, ikeda_desk):
        plan, root, _, _ = ikeda_desk
        fnn = [analysis.fnn_fraction(analysis.normalize(truth_series(root, plan, s)), 3, 10.0, 2.0) for s in plan.seeds]
        verdict(7, max(fnn) < 0.01, f"FNN at d=3: max {max(fnn):.4f} over {len(fnn)} truth series")

    def test_08_tda_oracles(self):
        t0 = time.perf_counter()
        mismatches = 0
        for seed in range(30):
            P = np.random.default_rng(seed).normal(size=(25, 3))
            fast = rips_persistence(P, max_dim=2)
            slow = FilteredComplex(P, max_dim=2).diagrams()
            mismatches += sum(a != b for a, b in zip(fast, slow))
        rng = np.random.default_rng(8)
        gap = 0.0
        for _ in range(50):
            dg = []
            for n in rng.integers(0, 7, 2):
                b = rng.uniform(0, 2, n)
                dg.append(PersistenceDiagram(1, np.column_stack([b, b + rng.uniform(0.01, 1.5, n)])))
            for p in (1.0, 2.0):
                gap = max(gap, abs(wasserstein(dg[0], dg[1], p) - exhaustive_wasserstein(dg[0].pairs, dg[1].pairs, p)))
        elapsed = time.perf_counter() - t0
        ok = mismatches == 0 and gap <= 1e-9 and elapsed < 120
        verdict(8, ok, f"{mismatches} diagram mismatches in 30 clouds, max W gap = {gap:.2g}, {elapsed:.1f} s")

    def test_09_geometry(self):
        sq = rips_persistence(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), max_dim=1)[1]
        tri = rips_persistence(np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]), max_dim=1)[1]
        ok = sq.pairs.tolist() == [[1.0, math.sqrt(2.0)]] and len(tri) == 0
        verdict(9, ok, f"square H1 = {sq.pairs.tolist()}, triangle H1 has {len(tri)} pairs")

    def test_10_baseline_w1_band(self, ikeda_desk):
        plan, root, _, _ = ikeda_desk
        h1 = read_table(root)["H1"]
        base, iqr = h1["baseline"]
        ratio = h1[2][0] / base
        off = {q: abs(h1[q][0] - base) for q in range(5, 11)}
        worst = max(off, key=off.get)
        ok = ratio >= 1.5 and off[worst] <= 2 * iqr
        verdict(
            10,
            ok,
            f"H1 W1 q=2/baseline = {ratio:.2f}; max |median(q>=5) - baseline| = {off[worst]:.3f} "
            f"vs 2*IQR = {2 * iqr:.3f}",
        )

    def test_11_mackey_glass(self, mackey_glass_desk):
        plan, root, result = mackey_glass_desk
        spec = plan.spec(0.0)
        bounded, fnn = True, []
        for s in plan.seeds:
            run_dir = root / "runs" / "eps_0" / f"seed_{s}" / f"q_{plan.q_truth}"
            status = json.loads((run_dir / "status.json").read_text())
            if status["status"] != "ok" or status["attempts"] != 1:
                bounded = False
                continue
            traj, _ = Trajectory.load(run_dir / "trajectory.npz")
            x = traj.sample(0.0, traj.t_max, 4.0).values
            bounded &= traj.t_max == plan.total_steps / 2 and bool(np.all((0 <= x) & (x <= spec.M)))
            fnn.append(analysis.fnn_fraction(analysis.normalize(truth_series(root, plan, s)), 3))
        dim = read_table(root)["Dim."]
        base = dim["baseline"][0]
        gaps = {q: (abs(dim[q][0] - base) if dim[q] else math.inf) for q in range(6, 11)}
        worst = max(gaps, key=gaps.get)
        ok = bounded and len(fnn) == plan.n_sims and max(fnn) < 0.05 and gaps[worst] <= 0.15
        verdict(
            11,
            ok,
            f"bounded={bounded}, FNN(d=3) max {max(fnn, default=math.nan):.4f}, "
            f"CD(17) = {base:.3f}, max |CD(q) - CD(17)| = {gaps[worst]:.3f} at q={worst}",
        )

    def test_12_determinism(self, ikeda_desk, tmp_path_factory):
        plan, root, _, _ = ikeda_desk
        again = tmp_path_factory.mktemp("ikeda_desk_again")
        run_experiment(plan, again)
        same = (root / "tables.csv").read_bytes() == (again / "tables.csv").read_bytes()
        verdict(12, same, "tables.csv byte-identical across two desk runs" if same else "tables.csv differs")
