"""Triangle count, co-degrees and the Z statistics of a graph."""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import InvalidParameter
from .graph_core import Graph, n_pairs
from .rng import as_stream

DEFAULT_EXACT_LIMIT = 10_000

# Throughput estimates (operations per second) used to pick the all-pairs
# co-degree method; only the ratio matters.
_WEDGE_RATE = 4.0e8
_GEMM_RATE = 2.5e11
# above this many wedges X is taken from the co-degree sum instead of a separate count
_INDEPENDENT_COUNT_LIMIT = 4.0e8


@dataclass(frozen=True)
class RoundStats:
    """Observables of one graph ``G_i``.

    ``maxY`` ranges over all pairs of K_n when ``maxY_exact`` is true;
    otherwise it is the lower estimate described in :func:`round_stats`.
    ``sumZ2`` is an exact Python integer.
    """

    round: int
    n: int
    edges: int
    X: int
    maxY: int
    sumZ: int
    sumZ2: int
    maxY_exact: bool = True


@dataclass(frozen=True)
class InfluenceProbe:
    edge: tuple
    z_value: int
    delta_X: int
    delta_Z: int
    x_cap: int
    z_cap: float

    @property
    def x_within(self):
        return self.delta_X <= self.x_cap

    @property
    def z_within(self):
        return self.delta_Z <= self.z_cap


@dataclass(frozen=True)
class ZMoments:
    """Second moments of the next-round Z statistics given ``G_i``.

    ``exact`` is E[sum_e Z_{i+1,e}^2 | G_i], ``bound`` the per-edge bound
    summed, and ``empirical`` a Monte Carlo mean (None if not sampled).
    """

    exact: float
    bound: float
    empirical: float = None
    empirical_se: float = None
    trials: int = 0


def count_triangles(g):
    """Exact triangle count by degree-ordered orientation.

    Each triangle is found once from its lowest-ranked vertex, so the work
    is bounded by the sum over oriented edges of the head's out-degree.
    """
    if g.n < 3:
        return 0
    if g.complete:
        return math.comb(g.n, 3)
    return int(K.count_triangles_csr(g.n, g.indptr, g.indices, g.eid))


def codegree(g, u, v):
    """Number of common neighbours of ``u`` and ``v`` (edge or not)."""
    if u == v:
        raise InvalidParameter("co-degree needs two distinct vertices")
    if not (0 <= u < g.n and 0 <= v < g.n):
        raise InvalidParameter("vertex out of range")
    if g.complete:
        return g.n - 2
    return int(np.intersect1d(g.neighbors(u), g.neighbors(v), assume_unique=True).shape[0])


def edge_codegrees(g):
    """``Y_e`` for every edge of ``g`` (canonical order) and the triangle count."""
    if g.m == 0 or g.n < 3:
        return np.zeros(g.m, dtype=np.int64), 0
    y, total = K.edge_codegrees_listing(g.n, g.indptr, g.indices, g.eid, g.m)
    return y, int(total)


def exact_square_sum(y):
    hi, lo = K.sum_squares_split(np.ascontiguousarray(y, dtype=np.int64))
    return (int(hi) << 62) + int(lo)


def _wedges(g):
    d = g.degrees().astype(np.float64)
    return float(np.sum(d * (d - 1.0) / 2.0))


def _dense_codegrees(g):
    """All-pairs co-degrees as a dense float32 Gram matrix (exact below 2**24)."""
    from scipy.linalg import blas

    n = g.n
    a = np.zeros((n, n), dtype=np.float32)
    a[g.u, g.v] = 1.0
    a[g.v, g.u] = 1.0
    # a is symmetric, so a.T is a Fortran-ordered alias of a and syrk needs no copy
    c = blas.ssyrk(1.0, a.T)
    del a
    np.fill_diagonal(c, 0.0)
    return c


def _complete_stats(n, i):
    s = K.complete_stats(n)
    return RoundStats(round=i, n=n, edges=int(s[0]), X=int(s[1]), maxY=int(s[2]),
                      sumZ=int(s[3]), sumZ2=(int(s[4]) << 62) + int(s[5]), maxY_exact=True)


def round_stats(g, round_index=0, all_pairs=None, exact_limit=DEFAULT_EXACT_LIMIT):
    """Per-round statistics of ``g``.

    ``sumZ`` and ``sumZ2`` run over the edges of ``g``.  ``maxY`` is taken
    over all pairs of K_n when ``all_pairs`` is true (default: when
    ``n <= exact_limit``); otherwise it is the maximum over edges together
    with every pair touching one of the 1024 highest-degree vertices, and
    ``maxY_exact`` is false.
    """
    n = g.n
    if g.complete:
        return _complete_stats(n, round_index)
    if all_pairs is None:
        all_pairs = n <= exact_limit
    if g.m == 0 or n < 3:
        return RoundStats(round_index, n, g.m, 0, 0, 0, 0, maxY_exact=bool(all_pairs))

    if not all_pairs:
        y, x = edge_codegrees(g)
        top = np.argsort(-g.degrees(), kind="stable")[: min(K.TOP_VERTICES, n)]
        max_y = max(int(y.max()), int(K.max_rowwise_codegree(n, g.indptr, g.indices, top)))
        return RoundStats(round_index, n, g.m, x, max_y, int(y.sum()), exact_square_sum(y), False)

    wedges = _wedges(g)
    if n ** 3 / _GEMM_RATE < wedges / _WEDGE_RATE:
        mat = _dense_codegrees(g)
        y = K.gather_pairs(mat, g.u, g.v)
        max_y = int(mat.max())
        del mat
    else:
        y, max_y = K.sweep_codegrees(n, g.indptr, g.indices, g.eid, g.m)
        max_y = int(max_y)
    sum_z = int(y.sum())
    if wedges <= _INDEPENDENT_COUNT_LIMIT:
        x = count_triangles(g)
    else:
        # too large to list triangles separately; every triangle has three edges
        if sum_z % 3:
            raise AssertionError("co-degree sum over edges is not divisible by 3")
        x = sum_z // 3
    return RoundStats(round_index, n, g.m, x, max_y, sum_z, exact_square_sum(y), True)


def y_cap(n, eps, i, lam):
    """max{4n eps^{2i} + lam sqrt(4n eps^{2i}), lam^2}: the co-degree ceiling."""
    a = 4.0 * n * eps ** (2 * i)
    return max(a + lam * math.sqrt(a), lam * lam)


def _z_sum_squares(g):
    y, x = edge_codegrees(g)
    return x, exact_square_sum(y)


def influence_probe(g_i, e, eps, seed, n=None, lam=1.0, i=0):
    """Toggle one edge's percolation outcome and measure the change.

    ``G_{i+1}`` is ``g_i`` percolated with the given seed; the probe
    recomputes the triangle count and ``sum_e Z_{i+1,e}^2`` from scratch
    with the outcome of ``e`` flipped and everything else held fixed.
    """
    if n is None:
        n = g_i.n
    a, b = e
    k = g_i.edge_id(int(a), int(b))
    if k < 0:
        raise InvalidParameter(f"edge {tuple(e)} is not in the graph")
    y, _ = edge_codegrees(g_i)
    z = int(y[k])
    k0, k1, rnd = as_stream(seed).words
    keep = K.bernoulli_mask(g_i.m, float(eps), k0, k1, rnd)
    flipped = keep.copy()
    flipped[k] = not flipped[k]
    x1, z1 = _z_sum_squares(g_i.subgraph_mask(keep))
    x2, z2 = _z_sum_squares(g_i.subgraph_mask(flipped))
    return InfluenceProbe(edge=(min(a, b), max(a, b)), z_value=z, delta_X=abs(x1 - x2),
                          delta_Z=abs(z1 - z2), x_cap=z, z_cap=7.0 * z * y_cap(n, eps, i, lam))


def z_moments(g_i, eps, trials=0, seed=0):
    """Conditional second moment of ``sum_e Z_{i+1,e}^2`` one round ahead.

    Given ``e`` survives, ``Z_{i+1,e}`` is Binomial(``Z_{i,e}``, eps^2),
    which gives the exact value; ``bound`` sums
    ``eps^5 Z^2 + eps^3 Z``.  With ``trials > 0`` the expectation is also
    estimated by percolating ``g_i`` with streams ``(seed, t, 0)``.
    """
    y, _ = edge_codegrees(g_i)
    yf = y.astype(np.float64)
    e2 = eps * eps
    exact = float(np.sum(eps * (e2 * e2 * yf * yf + e2 * (1.0 - e2) * yf)))
    bound = float(np.sum(eps ** 5 * yf * yf + eps ** 3 * yf))
    if trials <= 0:
        return ZMoments(exact=exact, bound=bound)
    master = as_stream(seed).master
    vals = np.empty(trials, dtype=np.float64)
    for t in range(trials):
        keep = K.bernoulli_mask(g_i.m, float(eps), np.uint64(master), np.uint64(t), np.uint64(0))
        vals[t] = _z_sum_squares(g_i.subgraph_mask(keep))[1]
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("nan")
    return ZMoments(exact=exact, bound=bound, empirical=float(vals.mean()), empirical_se=se, trials=trials)


__all__ = ["RoundStats", "InfluenceProbe", "ZMoments", "count_triangles", "codegree",
           "edge_codegrees", "round_stats", "influence_probe", "z_moments", "y_cap", "Graph",
           "n_pairs"]
