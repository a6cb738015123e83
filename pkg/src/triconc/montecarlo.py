"""Reproducible trial ensembles, tail estimates and the exact small-n oracle.

Trial ``t`` of an ensemble with master seed ``s`` uses the random streams
``(s, t, r)``: round 0 for the direct G(n,p) sample and rounds 1..I for the
iterated process.  Trials are processed in fixed chunks of
:data:`CHUNK` consecutive indices whose results land in pre-assigned
slots, so the thread count only changes wall-clock time.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from statistics import NormalDist

import numba as nb
import numpy as np

from . import _kernels as K
from .bounds import expected_X, variance_X
from .errors import ConfigError, InvalidParameter
from .graph_core import ProcessTrace, Schedule, make_schedule, n_pairs
from .lemma_monitor import (RoundVerdict, evaluate_round_arrays, report_from_verdicts,
                            trace_thresholds)
from .triangle_stats import DEFAULT_EXACT_LIMIT, RoundStats

CHUNK = 256
MODES = ("direct", "iterated", "both")
ENUMERATION_LIMIT = 28
_Z95 = NormalDist().inv_cdf(0.975)


class EnsembleFailure(RuntimeError):
    """An ensemble could not be completed; no partial results are returned."""


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    p: float
    lambda_grid: tuple = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
    trials: int = 10_000
    master_seed: int = 0
    eps_max: float = 0.2
    mode: str = "both"
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    exact_stats_limit: int = DEFAULT_EXACT_LIMIT
    rounds: int = None
    lemma_lambda: float = None

    def __post_init__(self):
        object.__setattr__(self, "lambda_grid", tuple(float(x) for x in self.lambda_grid))
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ConfigError("n", f"must be an integer >= 1, got {self.n!r}")
        if not 0.0 < self.p <= 1.0:
            raise ConfigError("p", f"must lie in (0, 1], got {self.p!r}")
        if not isinstance(self.trials, (int, np.integer)) or self.trials < 1:
            raise ConfigError("trials", f"must be an integer >= 1, got {self.trials!r}")
        grid = self.lambda_grid
        if any(x < 0 for x in grid):
            raise ConfigError("lambda_grid", "values must be >= 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("lambda_grid", "values must be strictly increasing")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed", "must lie in [0, 2**64)")
        if not 0.0 < self.eps_max < 1.0:
            raise ConfigError("eps_max", f"must lie in (0, 1), got {self.eps_max!r}")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        if self.exact_stats_limit < 0:
            raise ConfigError("exact_stats_limit", "must be >= 0")
        if self.rounds is not None and self.rounds < 1:
            raise ConfigError("rounds", "must be >= 1 when given")

    def schedule(self):
        if self.p == 1.0:
            return Schedule(eps=1.0, rounds=self.rounds or 1, target_p=1.0)
        if self.rounds is not None:
            return Schedule.fixed(self.p, self.rounds)
        return make_schedule(self.n, self.p, self.eps_max)

    @property
    def monitor_lambda(self):
        if self.lemma_lambda is not None:
            return float(self.lemma_lambda)
        positive = [x for x in self.lambda_grid if x > 0]
        return positive[-1] if positive else 1.0


@dataclass(frozen=True)
class Sample:
    """Final triangle counts of one ensemble mode."""

    x: np.ndarray
    n: int
    p: float
    label: str = ""


_FIELDS = ("edges", "X", "maxY", "sumZ", "z2_hi", "z2_lo", "exact")


@dataclass
class Ensemble:
    config: ExperimentConfig
    schedule: Schedule
    x_direct: np.ndarray = None
    edges_direct: np.ndarray = None
    round_table: np.ndarray = None  # (trials, rounds+1, 7) int64, columns _FIELDS
    sum_z2: np.ndarray = None  # (trials, rounds+1), int64 or exact Python ints
    flags: np.ndarray = None  # (trials, rounds+1, 3) bool: x_ok, y_ok, z2_ok
    margins: np.ndarray = None
    lemma_lambda: float = None
    wall_clock: dict = field(default_factory=dict)

    @property
    def trials(self):
        return self.config.trials

    @property
    def seeds(self):
        """Stream keys ``(master_seed, trial)`` of every trial."""
        return [(self.config.master_seed, t) for t in range(self.trials)]

    @property
    def x_iterated(self):
        if self.round_table is None:
            return None
        return self.round_table[:, -1, 1]

    def sample(self, mode=None):
        if mode is None:
            if self.config.mode == "both":
                raise InvalidParameter("ensemble has both modes; pass mode='direct' or 'iterated'")
            mode = self.config.mode
        x = self.x_direct if mode == "direct" else self.x_iterated
        if x is None:
            raise InvalidParameter(f"ensemble has no {mode} results")
        return Sample(x=x, n=self.config.n, p=self.config.p, label=mode)

    def round_stats(self, t, i):
        row = self.round_table[t, i]
        return RoundStats(round=i, n=self.config.n, edges=int(row[0]), X=int(row[1]), maxY=int(row[2]),
                          sumZ=int(row[3]), sumZ2=int(self.sum_z2[t, i]), maxY_exact=bool(row[6]))

    def trace(self, t):
        stats = [self.round_stats(t, i) for i in range(self.schedule.rounds + 1)]
        return ProcessTrace(n=self.config.n, schedule=self.schedule, per_round=stats, final_X=stats[-1].X)

    def report(self, t):
        verdicts = []
        for i in range(self.schedule.rounds + 1):
            f = self.flags[t, i]
            mg = self.margins[t, i]
            verdicts.append(RoundVerdict(round=i, x_ok=bool(f[0]), y_ok=bool(f[1]), z2_ok=bool(f[2]),
                                         x_margin=float(mg[0]), y_margin=float(mg[1]),
                                         z2_margin=float(mg[2]),
                                         y_approximate=not bool(self.round_table[t, i, 6])))
        return report_from_verdicts(verdicts)

    def lemma_reports(self):
        return [self.report(t) for t in range(self.trials)]

    def all_rounds_ok(self):
        return self.flags.all(axis=(1, 2))


def _run_chunks(total, threads, work):
    starts = list(range(0, total, CHUNK))
    try:
        if threads <= 1 or len(starts) == 1:
            for s in starts:
                work(s, min(CHUNK, total - s))
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(work, s, min(CHUNK, total - s)) for s in starts]
                for f in futures:
                    f.result()
    except MemoryError as exc:
        raise EnsembleFailure(f"out of memory after scheduling {len(starts)} chunks") from exc


def _combine_z2(hi, lo):
    if not hi.any():
        return lo.copy()
    out = np.empty(hi.shape, dtype=object)
    for idx in np.ndindex(hi.shape):
        out[idx] = (int(hi[idx]) << 62) + int(lo[idx])
    return out


def run_ensemble(cfg):
    cfg_n, t_total = int(cfg.n), int(cfg.trials)
    k0 = np.uint64(cfg.master_seed)
    schedule = cfg.schedule()
    ens = Ensemble(config=cfg, schedule=schedule)

    if cfg.mode in ("direct", "both"):
        out = np.zeros((t_total, 2), dtype=np.int64)

        def direct(s, c):
            K.direct_chunk(cfg_n, float(cfg.p), k0, s, c, out[s:s + c])

        t0 = time.perf_counter()
        _run_chunks(t_total, cfg.threads, direct)
        ens.wall_clock["direct"] = time.perf_counter() - t0
        ens.edges_direct = out[:, 0]
        ens.x_direct = out[:, 1]

    if cfg.mode in ("iterated", "both"):
        rounds = schedule.rounds
        table = np.zeros((t_total, rounds + 1, len(_FIELDS)), dtype=np.int64)
        stats_mode = K.STATS_EXACT if cfg_n <= cfg.exact_stats_limit else K.STATS_APPROX

        def iterated(s, c):
            K.iterated_chunk(cfg_n, float(schedule.eps), rounds, k0, s, c, stats_mode, table[s:s + c])

        t0 = time.perf_counter()
        _run_chunks(t_total, cfg.threads, iterated)
        ens.wall_clock["iterated"] = time.perf_counter() - t0
        ens.round_table = table
        ens.sum_z2 = _combine_z2(table[:, :, 4], table[:, :, 5])

        lam = cfg.monitor_lambda
        ens.lemma_lambda = lam
        flags = np.zeros((t_total, rounds + 1, 3), dtype=bool)
        margins = np.zeros((t_total, rounds + 1, 3), dtype=np.float64)
        for i, thr in enumerate(trace_thresholds(cfg_n, schedule, lam)):
            ok, mg = evaluate_round_arrays(table[:, i, 1], table[:, i, 2], ens.sum_z2[:, i], thr)
            flags[:, i, :] = np.stack(ok, axis=1)
            margins[:, i, :] = np.stack(mg, axis=1)
        ens.flags, ens.margins = flags, margins
    return ens


# exact enumeration -------------------------------------------------------

@nb.njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@nb.njit(cache=True)
def _enumerate_counts(m, tri_masks):
    n_tri = tri_masks.shape[0]
    counts = np.zeros((n_tri + 1, m + 1), dtype=np.int64)
    for mask in range(1 << m):
        x = 0
        for j in range(n_tri):
            tm = tri_masks[j]
            if mask & tm == tm:
                x += 1
        counts[x, _popcount(mask)] += 1
    return counts


@lru_cache(maxsize=None)
def _graph_counts(n):
    """``counts[x, k]``: number of graphs on n vertices with x triangles and k edges."""
    m = n_pairs(n)
    pair_bit = {pair: b for b, pair in enumerate(combinations(range(n), 2))}
    tri = [(1 << pair_bit[(a, b)]) | (1 << pair_bit[(a, c)]) | (1 << pair_bit[(b, c)])
           for a, b, c in combinations(range(n), 3)]
    counts = _enumerate_counts(m, np.array(tri, dtype=np.int64).reshape(-1))
    counts.flags.writeable = False
    return counts


@dataclass(frozen=True)
class ExactDistribution:
    n: int
    p: float
    support: tuple  # ((x, probability), ...) sorted by x, zero-probability values dropped

    @property
    def values(self):
        return np.array([x for x, _ in self.support], dtype=np.int64)

    @property
    def probs(self):
        return np.array([q for _, q in self.support], dtype=np.float64)

    def pmf(self, x):
        return dict(self.support).get(x, 0.0)

    def mean(self):
        return math.fsum(x * q for x, q in self.support)

    def variance(self):
        mu = self.mean()
        return math.fsum(q * (x - mu) ** 2 for x, q in self.support)

    def central_moment(self, k):
        mu = self.mean()
        return math.fsum(q * (x - mu) ** k for x, q in self.support)

    def tail(self, lam):
        """P(|X - E X| >= lam * sd) with the analytic centre and scale."""
        center, scale = expected_X(self.n, self.p), math.sqrt(variance_X(self.n, self.p))
        return math.fsum(q for x, q in self.support if abs(x - center) >= lam * scale)


def enumerate_exact(n, p):
    """Exact law of X by visiting every graph on ``n`` labelled vertices."""
    m = n_pairs(n)
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    if m > ENUMERATION_LIMIT:
        raise InvalidParameter(f"enumeration limited to C(n,2) <= {ENUMERATION_LIMIT} (n <= 8); got n={n}")
    if not 0.0 <= p <= 1.0:
        raise InvalidParameter("p must lie in [0, 1]")
    counts = _graph_counts(n)
    support = []
    for x in range(counts.shape[0]):
        terms = [int(c) * p ** k * (1.0 - p) ** (m - k) for k, c in enumerate(counts[x]) if c]
        prob = math.fsum(terms)
        if prob > 0.0:
            support.append((x, prob))
    return ExactDistribution(n=n, p=float(p), support=tuple(support))


# tails -------------------------------------------------------------------

@dataclass(frozen=True)
class TailEstimate:
    lam: float
    center: float
    scale: float
    fraction: float
    ci_lo: float
    ci_hi: float
    trials: int


def wilson_interval(k, n, z=_Z95):
    if n <= 0:
        raise InvalidParameter("need at least one trial")
    f = k / n
    denom = 1.0 + z * z / n
    mid = (f + z * z / (2 * n)) / denom
    half = z * math.sqrt(f * (1.0 - f) / n + z * z / (4 * n * n)) / denom
    return max(0.0, min(f, mid - half)), min(1.0, max(f, mid + half))


def _as_sample(obj, mode=None):
    if isinstance(obj, Sample):
        return obj
    if isinstance(obj, Ensemble):
        return obj.sample(mode)
    raise InvalidParameter(f"expected a Sample or Ensemble, got {type(obj).__name__}")


def empirical_tail(ens, lam, mode=None):
    s = _as_sample(ens, mode)
    if s.x.size == 0:
        raise InvalidParameter("empty ensemble")
    center = expected_X(s.n, s.p)
    scale = math.sqrt(variance_X(s.n, s.p))
    if scale == 0.0:
        raise InvalidParameter("Var(X) = 0 for this (n, p); the tail event is degenerate")
    hits = int(np.count_nonzero(np.abs(s.x - center) >= lam * scale))
    lo, hi = wilson_interval(hits, s.x.size)
    return TailEstimate(lam=float(lam), center=center, scale=scale, fraction=hits / s.x.size,
                        ci_lo=lo, ci_hi=hi, trials=int(s.x.size))


# distribution comparison -------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    tv: float
    mean_gap: float
    var_gap: float
    m3_gap: float
    m4_gap: float
    max_cdf_gap: float
    size_a: int = None
    size_b: int = None
    ks_critical_99: float = None

    @property
    def moment_gaps(self):
        return (self.mean_gap, self.var_gap, self.m3_gap, self.m4_gap)


def ks_critical(n1, n2, alpha=0.01):
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) * math.sqrt((n1 + n2) / (n1 * n2))


def _pmf_of(obj, mode=None):
    """(values, probabilities, moments, size, (n, p)) of a sample or exact law."""
    if isinstance(obj, ExactDistribution):
        v, q = obj.values, obj.probs
        mom = (obj.mean(), obj.variance(), obj.central_moment(3), obj.central_moment(4))
        return v, q, mom, None, (obj.n, obj.p)
    s = _as_sample(obj, mode)
    v, c = np.unique(s.x, return_counts=True)
    xf = s.x.astype(np.float64)
    mu = float(xf.mean())
    d = xf - mu
    mom = (mu, float(np.mean(d ** 2)), float(np.mean(d ** 3)), float(np.mean(d ** 4)))
    return v, c / s.x.size, mom, int(s.x.size), (s.n, s.p)


def compare_distributions(a, b, mode_a=None, mode_b=None, max_bins=512):
    """Total variation, moment gaps and the largest CDF gap between two laws.

    TV is computed on shared bins: one bin per integer value when the joint
    range is at most ``max_bins`` wide, otherwise ``max_bins`` equal-width
    bins over the joint range.
    """
    va, qa, ma, na, key_a = _pmf_of(a, mode_a)
    vb, qb, mb, nb_, key_b = _pmf_of(b, mode_b)
    if key_a[0] != key_b[0] or not math.isclose(key_a[1], key_b[1], rel_tol=1e-12):
        raise InvalidParameter(f"(n, p) mismatch: {key_a} vs {key_b}")
    lo = int(min(va.min(), vb.min()))
    hi = int(max(va.max(), vb.max()))
    if hi - lo + 1 <= max_bins:
        ha = np.zeros(hi - lo + 1)
        hb = np.zeros(hi - lo + 1)
        np.add.at(ha, va - lo, qa)
        np.add.at(hb, vb - lo, qb)
    else:
        edges = np.linspace(lo, hi + 1, max_bins + 1)
        ha, _ = np.histogram(va, bins=edges, weights=qa)
        hb, _ = np.histogram(vb, bins=edges, weights=qb)
    tv = 0.5 * float(np.abs(ha - hb).sum())
    grid = np.union1d(va, vb)
    cdf_a = np.cumsum(qa)[np.searchsorted(va, grid, side="right") - 1]
    cdf_b = np.cumsum(qb)[np.searchsorted(vb, grid, side="right") - 1]
    cdf_a = np.where(grid < va[0], 0.0, cdf_a)
    cdf_b = np.where(grid < vb[0], 0.0, cdf_b)
    gap = float(np.max(np.abs(cdf_a - cdf_b)))
    ks = ks_critical(na, nb_) if na and nb_ else None
    return ComparisonReport(tv=tv, mean_gap=ma[0] - mb[0], var_gap=ma[1] - mb[1], m3_gap=ma[2] - mb[2],
                            m4_gap=ma[3] - mb[3], max_cdf_gap=gap, size_a=na, size_b=nb_,
                            ks_critical_99=ks)
