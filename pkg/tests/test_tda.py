"""Tests for Rips persistence and Wasserstein distances between diagrams."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaymaps import tda
from delaymaps.analysis import PointCloud
from delaymaps.errors import InvalidArgument, ResourceError
from delaymaps.tda import FilteredComplex, PersistenceDiagram, rips_persistence, wasserstein

from oracles import exhaustive_wasserstein


def random_diagram(rng, n, k=1):
    b = rng.uniform(0, 2, n)
    return PersistenceDiagram(k, np.column_stack([b, b + rng.uniform(0.01, 1.5, n)]))


def circle(n, noise, seed):
    rng = np.random.default_rng(seed)
    th = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([np.cos(th), np.sin(th)]) + noise * rng.normal(size=(n, 2))


class TestGeometry:
    def test_square(self):
        dgms = rips_persistence(PointCloud([[0, 0], [1, 0], [1, 1], [0, 1]]), max_dim=2)
        np.testing.assert_array_equal(dgms[1].pairs, [[1.0, math.sqrt(2.0)]])
        assert len(dgms[2]) == 0

    def test_equilateral_triangle(self):
        P = [[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]
        dgms = rips_persistence(PointCloud(P), max_dim=1)
        assert len(dgms[1]) == 0
        np.testing.assert_allclose(dgms[0].pairs, [[0, 1], [0, 1]], atol=1e-15)

    def test_two_points(self):
        dgms = rips_persistence(np.array([[0.0], [3.0]]), max_dim=1)
        np.testing.assert_array_equal(dgms[0].pairs, [[0.0, 3.0]])

    def test_circle_has_one_long_loop(self):
        dgms = rips_persistence(circle(60, 0.02, 1), max_dim=1)
        pers = np.sort(dgms[1].persistence)
        assert pers[-1] > 1.0
        assert pers[-2] < 0.2 if pers.size > 1 else True

    def test_octahedron_void(self):
        P = np.vstack([np.eye(3), -np.eye(3)])
        dgms = rips_persistence(P, max_dim=2)
        np.testing.assert_allclose(dgms[2].pairs, [[math.sqrt(2), 2.0]])

    def test_errors(self):
        with pytest.raises(InvalidArgument):
            rips_persistence(np.zeros((1, 2)))
        with pytest.raises(InvalidArgument):
            rips_persistence(np.random.default_rng(0).normal(size=(5, 2)), max_dim=3)
        with pytest.raises(ResourceError, match="subsample"):
            rips_persistence(np.random.default_rng(0).normal(size=(40, 3)), max_dim=2, max_simplices=100)


class TestOracle:
    @pytest.mark.parametrize("seed", range(30))
    def test_random_clouds(self, seed):
        P = np.random.default_rng(seed).normal(size=(25, 3))
        fast = rips_persistence(P, max_dim=2)
        slow = FilteredComplex(P, max_dim=2).diagrams()
        for a, b in zip(fast, slow):
            assert a == b

    @pytest.mark.parametrize("seed", range(5))
    def test_with_threshold(self, seed):
        P = np.random.default_rng(100 + seed).uniform(size=(20, 2))
        thr = 0.3
        fast = rips_persistence(P, max_dim=2, threshold=thr)
        slow = FilteredComplex(P, max_dim=2, threshold=thr).diagrams()
        for a, b in zip(fast, slow):
            assert a == b
            assert np.all(a.pairs[:, 1] <= thr)

    def test_tied_distances(self):
        g = np.arange(4.0)
        P = np.array([[x, y] for x in g for y in g])
        fast = rips_persistence(P, max_dim=2)
        slow = FilteredComplex(P, max_dim=2).diagrams()
        for a, b in zip(fast, slow):
            assert a == b

    def test_complex_is_a_filtration(self):
        P = np.random.default_rng(7).normal(size=(9, 2))
        cx = FilteredComplex(P, max_dim=2)
        value = {s: d for s, d in cx.simplices}
        for s, d in cx.simplices:
            for face in ((s[:i] + s[i + 1 :]) for i in range(len(s))):
                if face:
                    assert value[face] <= d
            assert d >= 0


class TestInvariants:
    def test_single_linkage_count(self):
        P = np.random.default_rng(3).normal(size=(40, 3))
        h0 = rips_persistence(P, max_dim=0)[0]
        assert len(h0) == 39
        assert np.all(h0.pairs[:, 0] == 0)

    def test_h0_deaths_are_minimum_spanning_tree(self):
        from scipy.sparse.csgraph import minimum_spanning_tree
        from scipy.spatial.distance import pdist, squareform

        P = np.random.default_rng(4).normal(size=(50, 2))
        mst = minimum_spanning_tree(squareform(pdist(P))).data
        h0 = rips_persistence(P, max_dim=0)[0]
        np.testing.assert_allclose(np.sort(h0.pairs[:, 1]), np.sort(mst), rtol=1e-15)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        P = rng.normal(size=(30, 3))
        a = rips_persistence(P, max_dim=2)
        b = rips_persistence(P[rng.permutation(30)], max_dim=2)
        for x, y in zip(a, b):
            np.testing.assert_allclose(x.pairs, y.pairs, rtol=1e-14)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_pairs_ordered_and_bounded(self, seed):
        P = np.random.default_rng(seed).uniform(size=(30, 2))
        from scipy.spatial.distance import pdist, squareform

        thr = tda.enclosing_radius(squareform(pdist(P)))
        for dgm in rips_persistence(P, max_dim=2):
            assert np.all(dgm.pairs[:, 0] < dgm.pairs[:, 1])
            assert np.all(dgm.pairs[:, 1] <= thr)


class TestWasserstein:
    def test_identical(self):
        d = random_diagram(np.random.default_rng(0), 5)
        assert wasserstein(d, d) == 0.0

    def test_single_to_empty(self):
        d = PersistenceDiagram(1, [[0, 2]])
        assert wasserstein(d, PersistenceDiagram(1, [])) == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_both_empty(self):
        assert wasserstein(PersistenceDiagram(0, []), PersistenceDiagram(0, [])) == 0.0

    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize("p", [1.0, 2.0])
    def test_exhaustive(self, seed, p):
        rng = np.random.default_rng(seed)
        a = random_diagram(rng, int(rng.integers(0, 7)))
        b = random_diagram(rng, int(rng.integers(0, 6)))
        assert abs(wasserstein(a, b, p) - exhaustive_wasserstein(a.pairs, b.pairs, p)) <= 1e-9

    def test_six_vs_five(self):
        rng = np.random.default_rng(99)
        a, b = random_diagram(rng, 6), random_diagram(rng, 5)
        assert abs(wasserstein(a, b, 1.0) - exhaustive_wasserstein(a.pairs, b.pairs, 1.0)) <= 1e-9

    def test_sup_ground(self):
        d = PersistenceDiagram(1, [[0, 2]])
        assert wasserstein(d, PersistenceDiagram(1, []), ground="sup") == 1.0
        e = PersistenceDiagram(1, [[0.5, 2.0]])
        assert wasserstein(d, e, ground="sup") == pytest.approx(0.5)

    def test_errors(self):
        with pytest.raises(InvalidArgument):
            wasserstein(PersistenceDiagram(0, []), PersistenceDiagram(1, []))
        with pytest.raises(InvalidArgument):
            wasserstein(PersistenceDiagram(1, []), PersistenceDiagram(1, []), p=0.5)
        with pytest.raises(InvalidArgument):
            PersistenceDiagram(1, [[2.0, 1.0]])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([1.0, 2.0]))
    def test_metric_axioms(self, seed, p):
        rng = np.random.default_rng(seed)
        a, b, c = (random_diagram(rng, int(rng.integers(0, 8))) for _ in range(3))
        ab, ba = wasserstein(a, b, p), wasserstein(b, a, p)
        assert ab >= 0
        assert ab == pytest.approx(ba, abs=1e-12)
        assert wasserstein(a, c, p) <= ab + wasserstein(b, c, p) + 1e-9


class TestDistanceMatrix:
    def test_singleton(self):
        rng = np.random.default_rng(1)
        a, b = random_diagram(rng, 3), random_diagram(rng, 4)
        M = tda.diagram_distance_matrix([a], [b])
        assert M.shape == (1, 1) and M[0, 0] == wasserstein(a, b)

    def test_self_matrix(self):
        rng = np.random.default_rng(2)
        ds = [random_diagram(rng, 4) for _ in range(4)]
        M = tda.diagram_distance_matrix(ds)
        np.testing.assert_array_equal(np.diag(M), 0.0)
        np.testing.assert_array_equal(M, M.T)


class TestSubsample:
    def test_full(self):
        P = np.random.default_rng(0).normal(size=(20, 2))
        sub = tda.subsample(PointCloud(P), 20, seed=1)
        assert sorted(map(tuple, sub.points)) == sorted(map(tuple, P))

    def test_deterministic(self):
        P = np.random.default_rng(0).normal(size=(100, 2))
        a = tda.subsample(PointCloud(P), 30, seed=5)
        b = tda.subsample(PointCloud(P), 30, seed=5)
        np.testing.assert_array_equal(a.points, b.points)

    def test_too_many(self):
        with pytest.raises(InvalidArgument):
            tda.subsample(PointCloud(np.zeros((3, 1))), 4, seed=0)

    def test_stable_loops(self):
        cloud = PointCloud(circle(600, 0.05, 3))
        da = rips_persistence(tda.subsample(cloud, 150, 1), max_dim=1)[1]
        db = rips_persistence(tda.subsample(cloud, 150, 2), max_dim=1)[1]
        big = PersistenceDiagram(1, [[0.0, 0.0]])
        assert wasserstein(da, db) < wasserstein(da, big)


class TestFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        dgms = [random_diagram(rng, n, k) for k, n in enumerate((4, 3, 2))]
        tda.write_diagrams(tmp_path / "d.csv", dgms)
        back = tda.read_diagrams(tmp_path / "d.csv")
        assert back == dgms
