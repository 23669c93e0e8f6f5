"""Vietoris-Rips persistent homology over the two-element field.

:func:`rips_persistence` follows the usual cohomology strategy: simplices are
addressed by their rank in the combinatorial number system, H0 comes from a
union-find pass over the edges, and higher dimensions reduce the coboundary
matrix column by column with clearing and the emergent-pair shortcut. Cofacets
are produced on the fly, never stored. The inner loops are compiled with
numba.

:class:`FilteredComplex` builds the full clique complex explicitly and reduces
its boundary matrix without any optimisation. It is slow and meant for checking
the fast path on small clouds.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from numba import njit
from numba.typed import Dict, List
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import pdist, squareform

from .analysis import PointCloud
from .errors import InvalidArgument, ResourceError

__all__ = [
    "MAX_SIMPLICES",
    "FilteredComplex",
    "PersistenceDiagram",
    "diagram_distance_matrix",
    "enclosing_radius",
    "read_diagrams",
    "rips_persistence",
    "subsample",
    "wasserstein",
    "write_diagrams",
]

#: default cap on the number of columns reduced in one dimension
MAX_SIMPLICES = 20_000_000


@dataclass(frozen=True, eq=False)
class PersistenceDiagram:
    """Finite pairs ``(birth, death)`` of dimension ``k``, sorted."""

    k: int
    pairs: np.ndarray

    def __post_init__(self):
        P = np.array(self.pairs, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(P)):
            raise InvalidArgument("diagram pairs must be finite")
        if np.any(P[:, 0] > P[:, 1]):
            raise InvalidArgument("every pair needs birth <= death")
        P = P[np.lexsort((P[:, 1], P[:, 0]))]
        P.setflags(write=False)
        object.__setattr__(self, "pairs", P)
        object.__setattr__(self, "k", int(self.k))

    def __len__(self) -> int:
        return self.pairs.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PersistenceDiagram):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.pairs, other.pairs)

    __hash__ = None

    def __repr__(self):
        return f"PersistenceDiagram(k={self.k}, n={len(self)})"

    @property
    def persistence(self) -> np.ndarray:
        return self.pairs[:, 1] - self.pairs[:, 0]


def enclosing_radius(D: np.ndarray) -> float:
    """``min_i max_j D[i, j]``; the Rips complex is a cone from there on."""
    return float(np.min(np.max(D, axis=1)))


# -- compiled core -----------------------------------------------------------


def _binomials(n: int, k: int) -> np.ndarray:
    B = np.zeros((n + 1, k + 1), dtype=np.int64)
    for i in range(n + 1):
        for j in range(min(i, k) + 1):
            B[i, j] = math.comb(i, j)
    return B


@njit(cache=True)
def _vertices(idx, k, n, B, out):
    """Vertices of the ``k``-simplex with rank ``idx``, in decreasing order."""
    hi = n - 1
    for i in range(k + 1):
        order = k + 1 - i
        lo = order - 1
        # largest v <= hi with B[v, order] <= idx
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if B[mid, order] <= idx:
                lo = mid
            else:
                hi = mid - 1
        out[i] = lo
        idx -= B[lo, order]
        hi = lo - 1


@njit(cache=True)
def _diameter(verts, D):
    d = 0.0
    m = verts.shape[0]
    for a in range(m):
        for b in range(a + 1, m):
            if D[verts[a], verts[b]] > d:
                d = D[verts[a], verts[b]]
    return d


@njit(cache=True)
def _cofacet(verts, k, w, B):
    ci = 0
    p = 0
    for i in range(k + 1):
        v = verts[i]
        if v > w:
            ci += B[v, k + 2 - i]
            p += 1
        else:
            ci += B[v, k + 1 - i]
    return ci + B[w, k + 2 - p]


@njit(cache=True)
def _in(verts, w):
    for v in verts:
        if v == w:
            return True
    return False


@njit(cache=True)
def _min_cofacet(verts, k, diam, n, B, D, thr):
    """Filtration-first cofacet: smallest diameter, then largest rank.

    Ranks grow with the added vertex, so scanning it downwards returns the
    first cofacet that keeps the diameter unchanged as soon as it is seen.
    """
    best_d = np.inf
    best_i = -1
    for w in range(n - 1, -1, -1):
        if _in(verts, w):
            continue
        cd = diam
        for v in verts:
            if D[w, v] > cd:
                cd = D[w, v]
        if cd > thr:
            continue
        if cd < best_d:
            best_d = cd
            best_i = _cofacet(verts, k, w, B)
            if cd == diam:
                break
    return best_d, best_i


@njit(cache=True)
def _push_coboundary(heap, verts, k, diam, n, B, D, thr):
    for w in range(n - 1, -1, -1):
        if _in(verts, w):
            continue
        cd = diam
        for v in verts:
            if D[w, v] > cd:
                cd = D[w, v]
        if cd <= thr:
            heapq.heappush(heap, (cd, -_cofacet(verts, k, w, B)))


@njit(cache=True)
def _pop_pivot(heap):
    """Lowest entry with odd multiplicity, left on the heap; (inf, 1) if none."""
    while len(heap) > 0:
        top = heapq.heappop(heap)
        if len(heap) > 0 and heap[0][0] == top[0] and heap[0][1] == top[1]:
            heapq.heappop(heap)
        else:
            heapq.heappush(heap, top)
            return top
    return (np.inf, np.int64(1))


@njit(cache=True)
def _reduce(col_idx, col_diam, k, n, B, D, thr):
    """Reduce the coboundary columns of dimension ``k``.

    Columns come in reverse filtration order. Returns the finite pairs
    ``(birth, death)`` and the ranks of the pivot cofacets for clearing.
    """
    pivot_map = Dict.empty(key_type=numba.int64, value_type=numba.int64)
    rec_start = List.empty_list(numba.int64)
    rec_len = List.empty_list(numba.int64)
    rec_col = List.empty_list(numba.int64)
    entries = List.empty_list(numba.int64)
    births = List.empty_list(numba.float64)
    deaths = List.empty_list(numba.float64)
    pivots = List.empty_list(numba.int64)
    verts = np.empty(k + 1, dtype=np.int64)
    other = np.empty(k + 1, dtype=np.int64)
    for j in range(col_idx.shape[0]):
        s = col_idx[j]
        ds = col_diam[j]
        _vertices(s, k, n, B, verts)
        pd, pi = _min_cofacet(verts, k, ds, n, B, D, thr)
        if pi < 0:
            continue
        if pi not in pivot_map:
            pivot_map[pi] = len(rec_col)
            rec_col.append(s)
            rec_start.append(len(entries))
            rec_len.append(0)
            births.append(ds)
            deaths.append(pd)
            pivots.append(pi)
            continue
        heap = [(0.0, np.int64(0))]
        heap.pop()
        _push_coboundary(heap, verts, k, ds, n, B, D, thr)
        work = List.empty_list(numba.int64)
        while True:
            top = _pop_pivot(heap)
            if top[0] == np.inf:
                break
            pd = top[0]
            pi = -top[1]
            if pi not in pivot_map:
                # store V mod 2: sort and drop pairs
                arr = np.empty(len(work), dtype=np.int64)
                for t in range(len(work)):
                    arr[t] = work[t]
                arr.sort()
                start = len(entries)
                t = 0
                while t < arr.shape[0]:
                    if t + 1 < arr.shape[0] and arr[t + 1] == arr[t]:
                        t += 2
                    else:
                        entries.append(arr[t])
                        t += 1
                pivot_map[pi] = len(rec_col)
                rec_col.append(s)
                rec_start.append(start)
                rec_len.append(len(entries) - start)
                births.append(ds)
                deaths.append(pd)
                pivots.append(pi)
                break
            # add the stored column r: its own simplex plus its V entries
            r = pivot_map[pi]
            m = rec_len[r]
            for t in range(-1, m):
                e = rec_col[r] if t < 0 else entries[rec_start[r] + t]
                work.append(e)
                _vertices(e, k, n, B, other)
                _push_coboundary(heap, other, k, _diameter(other, D), n, B, D, thr)
    nb = len(births)
    out = np.empty((nb, 2))
    piv = np.empty(len(pivots), dtype=np.int64)
    for t in range(nb):
        out[t, 0] = births[t]
        out[t, 1] = deaths[t]
    for t in range(len(pivots)):
        piv[t] = pivots[t]
    return out, piv


@njit(cache=True)
def _edges(D, thr):
    n = D.shape[0]
    m = 0
    for i in range(n):
        for j in range(i):
            if D[i, j] <= thr:
                m += 1
    idx = np.empty(m, dtype=np.int64)
    diam = np.empty(m)
    ii = np.empty(m, dtype=np.int64)
    jj = np.empty(m, dtype=np.int64)
    t = 0
    for i in range(n):
        for j in range(i):
            if D[i, j] <= thr:
                # rank of {i > j} is C(i, 2) + j
                idx[t] = i * (i - 1) // 2 + j
                diam[t] = D[i, j]
                ii[t] = i
                jj[t] = j
                t += 1
    return idx, diam, ii, jj


@njit(cache=True)
def _count_triangles(D, thr):
    n = D.shape[0]
    m = 0
    for a in range(n):
        for b in range(a):
            if D[a, b] > thr:
                continue
            for c in range(b):
                if D[a, c] <= thr and D[b, c] <= thr:
                    m += 1
    return m


@njit(cache=True)
def _triangles(D, thr, m, B, cleared):
    n = D.shape[0]
    idx = np.empty(m, dtype=np.int64)
    diam = np.empty(m)
    t = 0
    for a in range(n):
        for b in range(a):
            dab = D[a, b]
            if dab > thr:
                continue
            for c in range(b):
                if D[a, c] <= thr and D[b, c] <= thr:
                    r = B[a, 3] + B[b, 2] + c
                    if r in cleared:
                        continue
                    idx[t] = r
                    diam[t] = max(dab, D[a, c], D[b, c])
                    t += 1
    return idx[:t], diam[:t]


def _union_find_h0(n, diam, ii, jj, order):
    """Kruskal pass; returns H0 deaths and the mask of merging edges."""
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    deaths = []
    merging = np.zeros(diam.size, dtype=bool)
    for e in order:
        a, b = find(ii[e]), find(jj[e])
        if a != b:
            parent[max(a, b)] = min(a, b)
            deaths.append(diam[e])
            merging[e] = True
    return np.array(deaths), merging


def _diagram(k, pairs) -> PersistenceDiagram:
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return PersistenceDiagram(k, pairs[pairs[:, 1] > pairs[:, 0]])


def rips_persistence(
    cloud,
    max_dim: int = 2,
    threshold: float | None = None,
    *,
    max_simplices: int = MAX_SIMPLICES,
) -> list[PersistenceDiagram]:
    """Vietoris-Rips diagrams ``H_0 .. H_max_dim`` of a Euclidean point cloud.

    Args:
        cloud: :class:`PointCloud` or ``N x d`` array, ``N >= 2``.
        max_dim: highest homological dimension, at most 2.
        threshold: largest edge length in the complex; defaults to the
            enclosing radius, which leaves every finite pair unchanged.
        max_simplices: cap on the columns of one dimension before
            :class:`ResourceError` is raised.

    Zero-persistence pairs and unbounded classes are left out. H0 pairs are
    born at 0.
    """
    P = cloud.points if isinstance(cloud, PointCloud) else PointCloud(cloud).points
    n = P.shape[0]
    if n < 2:
        raise InvalidArgument("persistent homology needs at least two points")
    if max_dim not in (0, 1, 2):
        raise InvalidArgument(f"max_dim must be 0, 1 or 2, got {max_dim!r}")
    D = np.ascontiguousarray(squareform(pdist(P)))
    thr = enclosing_radius(D) if threshold is None else float(threshold)
    if not thr >= 0:
        raise InvalidArgument(f"threshold must be non-negative, got {threshold!r}")
    B = _binomials(n, max_dim + 2)

    e_idx, e_diam, ii, jj = _edges(D, thr)
    # filtration order: diameter up, rank down
    order = np.lexsort((-e_idx, e_diam))
    h0, merging = _union_find_h0(n, e_diam, ii, jj, order)
    out = [_diagram(0, np.column_stack([np.zeros_like(h0), h0]))]
    if max_dim == 0:
        return out

    keep = order[~merging[order]][::-1]
    if keep.size > max_simplices:
        raise ResourceError(_too_many(keep.size, max_simplices))
    pairs, pivots = _reduce(e_idx[keep], e_diam[keep], 1, n, B, D, thr)
    out.append(_diagram(1, pairs))
    if max_dim == 1:
        return out

    m = _count_triangles(D, thr)
    if m > max_simplices:
        raise ResourceError(_too_many(m, max_simplices))
    cleared = Dict.empty(key_type=numba.int64, value_type=numba.int64)
    for p in pivots:
        cleared[p] = 1
    t_idx, t_diam = _triangles(D, thr, m, B, cleared)
    # reverse filtration order: diameter down, rank up
    rev = np.lexsort((t_idx, -t_diam))
    pairs, _ = _reduce(t_idx[rev], t_diam[rev], 2, n, B, D, thr)
    out.append(_diagram(2, pairs))
    return out


def _too_many(count, cap):
    return (
        f"{count} simplices exceed the cap of {cap}; "
        "lower the threshold or subsample the cloud"
    )


# -- brute-force reference ---------------------------------------------------


class FilteredComplex:
    """Explicit Rips clique complex up to dimension ``max_dim + 1``.

    Simplices are stored as vertex tuples with their diameter, listed in a
    filtration order (diameter, then dimension, then vertices).
    """

    def __init__(self, points, max_dim: int = 2, threshold: float | None = None):
        P = np.asarray(points, dtype=float)
        self.n = P.shape[0]
        D = squareform(pdist(P))
        self.threshold = np.inf if threshold is None else float(threshold)
        self.max_dim = max_dim
        simplices = []
        for size in range(1, max_dim + 3):
            for s in itertools.combinations(range(self.n), size):
                d = max((D[a, b] for a, b in itertools.combinations(s, 2)), default=0.0)
                if d <= self.threshold:
                    simplices.append((d, size - 1, s))
        simplices.sort()
        self.simplices = [(s, d) for d, _, s in simplices]

    def __len__(self) -> int:
        return len(self.simplices)

    def diagrams(self) -> list[PersistenceDiagram]:
        """Standard column reduction of the full boundary matrix over F2."""
        pos = {s: i for i, (s, _) in enumerate(self.simplices)}
        low_owner: dict[int, int] = {}
        found = {k: [] for k in range(self.max_dim + 1)}
        for j, (s, d) in enumerate(self.simplices):
            col = 0
            if len(s) > 1:
                for face in itertools.combinations(s, len(s) - 1):
                    col ^= 1 << pos[face]
            while col:
                low = col.bit_length() - 1
                if low not in low_owner:
                    break
                col ^= low_owner[low]
            if col:
                low = col.bit_length() - 1
                low_owner[low] = col
                face, birth = self.simplices[low]
                k = len(face) - 1
                if k <= self.max_dim and d > birth:
                    found[k].append((birth, d))
        return [PersistenceDiagram(k, found[k]) for k in range(self.max_dim + 1)]


# -- distances ---------------------------------------------------------------


def _diag_dist(P, ground):
    span = P[:, 1] - P[:, 0]
    return span / 2.0 if ground == "sup" else span / math.sqrt(2.0)


def wasserstein(d1: PersistenceDiagram, d2: PersistenceDiagram, p: float = 1.0, ground: str = "euclidean") -> float:
    """``W_p`` with diagonal matching, solved as an exact assignment problem.

    ``ground`` selects the planar distance: ``"euclidean"`` or ``"sup"``.
    """
    if d1.k != d2.k:
        raise InvalidArgument(f"diagram dimensions differ: {d1.k} vs {d2.k}")
    if not p >= 1:
        raise InvalidArgument(f"p must be >= 1, got {p!r}")
    if ground not in ("euclidean", "sup"):
        raise InvalidArgument(f"unknown ground metric {ground!r}")
    A, Bp = d1.pairs, d2.pairs
    n1, n2 = len(A), len(Bp)
    if n1 + n2 == 0:
        return 0.0
    diff = A[:, None, :] - Bp[None, :, :]
    if ground == "sup":
        cross = np.max(np.abs(diff), axis=2)
    else:
        cross = np.sqrt(np.sum(diff**2, axis=2))
    C = np.zeros((n1 + n2, n1 + n2))
    C[:n1, :n2] = cross**p
    C[:n1, n2:] = np.inf
    C[n1:, :n2] = np.inf
    C[np.arange(n1), n2 + np.arange(n1)] = _diag_dist(A, ground) ** p
    C[n1 + np.arange(n2), np.arange(n2)] = _diag_dist(Bp, ground) ** p
    rows, cols = linear_sum_assignment(C)
    total = float(np.sum(C[rows, cols]))
    return total ** (1.0 / p)


def diagram_distance_matrix(
    diagrams_a: Sequence[PersistenceDiagram],
    diagrams_b: Sequence[PersistenceDiagram] | None = None,
    p: float = 1.0,
    ground: str = "euclidean",
) -> np.ndarray:
    """Pairwise ``W_p``; with ``diagrams_b`` omitted, the symmetric self matrix."""
    same = diagrams_b is None
    b = diagrams_a if same else diagrams_b
    M = np.zeros((len(diagrams_a), len(b)))
    for i, da in enumerate(diagrams_a):
        for j, db in enumerate(b):
            if same and j < i:
                M[i, j] = M[j, i]
            elif same and j == i:
                M[i, j] = 0.0
            else:
                M[i, j] = wasserstein(da, db, p, ground)
    return M


def subsample(cloud: PointCloud, n: int, seed: int) -> PointCloud:
    """``n`` points drawn uniformly without replacement."""
    N = len(cloud)
    if not 0 < n <= N:
        raise InvalidArgument(f"cannot draw {n} of {N} points")
    idx = np.random.default_rng(seed).choice(N, size=n, replace=False)
    return PointCloud(cloud.points[idx], cloud.provenance)


# -- files -------------------------------------------------------------------


def write_diagrams(path, diagrams: Sequence[PersistenceDiagram]) -> None:
    lines = ["k,birth,death"]
    for dgm in diagrams:
        lines += [f"{dgm.k},{b:.17g},{d:.17g}" for b, d in dgm.pairs]
    Path(path).write_text("\n".join(lines) + "\n")


def read_diagrams(path) -> list[PersistenceDiagram]:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.size == 0:
        return []
    ks = rows[:, 0].astype(int)
    return [PersistenceDiagram(k, rows[ks == k, 1:]) for k in range(int(ks.max()) + 1)]
