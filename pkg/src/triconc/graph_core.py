"""Sparse graphs, G(n,p) sampling and the iterated percolation process."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import InvalidParameter
from .rng import as_stream


def n_pairs(n):
    return n * (n - 1) // 2


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise InvalidParameter(f"vertex count must be an integer >= 1, got {n!r}")
    return int(n)


def _check_prob(name, p):
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise InvalidParameter(f"{name} must lie in [0, 1], got {p!r}")
    return p


def _frozen(arr):
    arr.flags.writeable = False
    return arr


class Graph:
    """Undirected simple graph on vertices ``0..n-1``.

    Edges are held as two parallel arrays ``u < v`` in lexicographic order;
    the symmetric CSR adjacency (sorted neighbour lists) is built on first
    use.  Instances are immutable.  ``make_complete`` returns a lazy K_n
    whose arrays are only materialised if something asks for them.
    """

    __slots__ = ("n", "_u", "_v", "_csr", "complete")

    def __init__(self, n, u, v, complete=False):
        self.n = int(n)
        self._u = None if u is None else _frozen(np.ascontiguousarray(u, dtype=np.int32))
        self._v = None if v is None else _frozen(np.ascontiguousarray(v, dtype=np.int32))
        self._csr = None
        self.complete = complete

    @classmethod
    def from_edges(cls, n, edges):
        """Build from any iterable of vertex pairs; validates simplicity."""
        n = _check_n(n)
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        if arr.size == 0:
            return cls(n, np.empty(0, np.int32), np.empty(0, np.int32))
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InvalidParameter("edges must be pairs")
        a = np.minimum(arr[:, 0], arr[:, 1])
        b = np.maximum(arr[:, 0], arr[:, 1])
        if (a < 0).any() or (b >= n).any():
            raise InvalidParameter("edge endpoint out of range")
        if (a == b).any():
            raise InvalidParameter("self-loops are not allowed")
        key = a * n + b
        order = np.argsort(key, kind="stable")
        key = key[order]
        if (np.diff(key) == 0).any():
            raise InvalidParameter("duplicate edge")
        return cls(n, a[order], b[order], complete=(key.size == n_pairs(n)))

    def _materialise(self):
        idx = np.arange(n_pairs(self.n), dtype=np.int64)
        u, v = K.pairs_to_uv(self.n, idx)
        self._u, self._v = _frozen(u), _frozen(v)

    @property
    def u(self):
        if self._u is None:
            self._materialise()
        return self._u

    @property
    def v(self):
        if self._v is None:
            self._materialise()
        return self._v

    @property
    def m(self):
        if self._u is None and self.complete:
            return n_pairs(self.n)
        return int(self._u.shape[0])

    def _adjacency(self):
        if self._csr is None:
            self._csr = tuple(_frozen(a) for a in K.build_csr(self.n, self.u, self.v))
        return self._csr

    @property
    def indptr(self):
        return self._adjacency()[0]

    @property
    def indices(self):
        return self._adjacency()[1]

    @property
    def eid(self):
        return self._adjacency()[2]

    def degrees(self):
        return np.diff(self.indptr)

    def neighbors(self, x):
        ptr = self.indptr
        return self.indices[ptr[x]:ptr[x + 1]]

    def edge_array(self):
        return np.stack([self.u, self.v], axis=1)

    def edge_id(self, a, b):
        """Position of edge {a, b} in the canonical edge list, or -1."""
        a, b = min(a, b), max(a, b)
        if a < 0 or b >= self.n or a == b:
            return -1
        if self.complete and self._u is None:
            return a * (2 * self.n - a - 1) // 2 + (b - a - 1)
        nb = self.neighbors(a)
        pos = int(np.searchsorted(nb, b))
        if pos < nb.shape[0] and nb[pos] == b:
            return int(self.eid[self.indptr[a] + pos])
        return -1

    def has_edge(self, a, b):
        return self.edge_id(a, b) >= 0

    def subgraph_mask(self, keep):
        """Edge-subgraph retaining the edges where ``keep`` is true."""
        keep = np.asarray(keep, dtype=bool)
        return Graph(self.n, self.u[keep], self.v[keep])

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and self.m == other.m
                and np.array_equal(self.u, other.u) and np.array_equal(self.v, other.v))

    __hash__ = None

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def make_complete(n):
    n = _check_n(n)
    return Graph(n, None, None, complete=True)


def empty_graph(n):
    return Graph(_check_n(n), np.empty(0, np.int32), np.empty(0, np.int32))


def sample_gnp(n, p, seed):
    """Direct G(n, p) sample by geometric skipping over the pairs of K_n."""
    n = _check_n(n)
    p = _check_prob("p", p)
    if p == 0.0:
        return empty_graph(n)
    if p == 1.0:
        return make_complete(n)
    k0, k1, rnd = as_stream(seed).words
    idx = K.gnp_pair_indices(n_pairs(n), p, k0, k1, rnd)
    u, v = K.pairs_to_uv(n, idx)
    return Graph(n, u, v)


def percolate(g, eps, seed):
    """Keep each edge of ``g`` independently with probability ``eps``.

    Edge ``k`` (canonical order) survives iff draw ``k`` of the stream is
    below ``eps``; for a lazy K_n the same rule runs over pair indices
    without materialising the complete graph.
    """
    eps = _check_prob("eps", eps)
    if eps == 1.0:
        return g
    k0, k1, rnd = as_stream(seed).words
    if g.complete and g._u is None:
        idx = K.bernoulli_indices(n_pairs(g.n), eps, k0, k1, rnd)
        u, v = K.pairs_to_uv(g.n, idx)
        return Graph(g.n, u, v)
    keep = K.bernoulli_mask(g.m, eps, k0, k1, rnd)
    return Graph(g.n, g.u[keep], g.v[keep])


@dataclass(frozen=True)
class Schedule:
    """Per-round retention ``eps`` and round count with ``eps**rounds == target_p``.

    ``relaxed`` is set when ``eps`` had to exceed the requested ``eps_max``.
    """

    eps: float
    rounds: int
    target_p: float
    relaxed: bool = False

    def __post_init__(self):
        if self.rounds < 1:
            raise InvalidParameter("rounds must be >= 1")
        if not 0.0 < self.eps <= 1.0:
            raise InvalidParameter(f"eps must lie in (0, 1], got {self.eps}")
        if not math.isclose(self.eps ** self.rounds, self.target_p, rel_tol=1e-12, abs_tol=0.0):
            raise InvalidParameter("eps**rounds does not reproduce target_p")

    @classmethod
    def fixed(cls, p, rounds):
        """Exact schedule with a caller-chosen number of rounds."""
        p = _check_prob("p", p)
        if p == 0.0:
            raise InvalidParameter("p must be positive")
        return cls(eps=p ** (1.0 / rounds), rounds=int(rounds), target_p=p)

    def round_probability(self, i):
        return self.eps ** i


def make_schedule(n, p, eps_max):
    n = _check_n(n)
    p = float(p)
    if not 0.0 < p < 1.0:
        raise InvalidParameter(f"p must lie strictly inside (0, 1), got {p}")
    eps_max = float(eps_max)
    if not 0.0 < eps_max < 1.0:
        raise InvalidParameter(f"eps_max must lie strictly inside (0, 1), got {eps_max}")
    # tolerance guards ratios like log(1000)/log(10) = 2.9999999999999996
    by_eps = math.floor(math.log(1.0 / p) / math.log(1.0 / eps_max) + 1e-9)
    by_n = math.floor(math.log(n) + 1e-12)
    rounds = max(1, min(by_n, by_eps))
    eps = p ** (1.0 / rounds)
    relaxed = eps > eps_max * (1.0 + 1e-12)
    return Schedule(eps=eps, rounds=rounds, target_p=p, relaxed=relaxed)


@dataclass
class ProcessTrace:
    n: int
    schedule: Schedule
    per_round: list
    final_X: int
    final_graph: Graph = field(repr=False, default=None)
    graphs: list = field(repr=False, default=None)


def run_process(n, schedule, seed, observer=None, keep_graphs=False):
    """Run the iterated percolation G_0 = K_n, ..., G_I.

    Round ``r >= 1`` draws from stream ``(seed.master, seed.trial, r)``.
    ``observer(i, G_i)`` is called on every graph including G_0 and its
    results are collected in ``per_round``; by default it is
    :func:`triconc.triangle_stats.round_stats`.
    """
    from .triangle_stats import RoundStats, count_triangles, round_stats

    n = _check_n(n)
    if not isinstance(schedule, Schedule):
        raise InvalidParameter("schedule must be a Schedule")
    base = as_stream(seed)
    if observer is None:
        def observer(i, g):
            return round_stats(g, round_index=i)

    g = make_complete(n)
    graphs = [g] if keep_graphs else None
    per_round = [observer(0, g)]
    for r in range(1, schedule.rounds + 1):
        g = percolate(g, schedule.eps, base.at_round(r))
        if keep_graphs:
            graphs.append(g)
        per_round.append(observer(r, g))
    last = per_round[-1]
    final_x = last.X if isinstance(last, RoundStats) else count_triangles(g)
    return ProcessTrace(n=n, schedule=schedule, per_round=per_round, final_X=final_x,
                        final_graph=g, graphs=graphs)
