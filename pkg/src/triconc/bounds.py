"""Closed-form quantities: tail bounds, moments of X, per-round thresholds.

All formulas are evaluated in double precision.  Integer statistics are
compared against real thresholds with :func:`int_le` / :func:`int_ge`,
which allow a relative slack of 1e-9 so last-ulp rounding in a threshold
never flips a verdict.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter
from .triangle_stats import y_cap

REL_SLACK = 1e-9


def int_le(stat, threshold):
    """``stat <= threshold`` for an integer statistic and a real threshold."""
    if math.isinf(threshold):
        return threshold > 0
    return stat <= math.floor(threshold + REL_SLACK * abs(threshold))


def int_ge(stat, threshold):
    if math.isinf(threshold):
        return threshold < 0
    return stat >= math.ceil(threshold - REL_SLACK * abs(threshold))


def real_le(lhs, rhs):
    return lhs <= rhs + REL_SLACK * max(abs(lhs), abs(rhs))


def mcdiarmid_tail(t, sum_sq_coeffs):
    """McDiarmid two-sided bound ``min(1, 2 exp(-2 t^2 / sum a_i^2))``."""
    if not sum_sq_coeffs > 0:
        raise InvalidParameter("sum of squared Lipschitz coefficients must be positive")
    if t < 0:
        raise InvalidParameter("deviation t must be non-negative")
    return min(1.0, 2.0 * math.exp(-2.0 * t * t / sum_sq_coeffs))


def subgaussian_rhs(lam, c):
    if not c > 0:
        raise InvalidParameter("constant c must be positive")
    if lam < 0:
        raise InvalidParameter("lambda must be non-negative")
    return math.exp(-c * lam * lam)


def expected_X(n, p):
    return math.comb(n, 3) * p ** 3


def variance_X(n, p):
    """Exact variance of the triangle count of G(n, p).

    Distinct triangles are independent unless they share an edge; the
    ``C(n,2) (n-2)(n-3)`` ordered pairs sharing exactly one edge each
    contribute covariance ``p^5 - p^6``.
    """
    if n < 3:
        return 0.0
    single = math.comb(n, 3) * (p ** 3 - p ** 6)
    shared = 2 * math.comb(n, 2) * math.comb(n - 2, 2) * (p ** 5 - p ** 6)
    return max(0.0, single + shared)


def var_lower_bound_check(n, p):
    return variance_X(n, p) >= 0.1 * (n * p) ** 3


@dataclass(frozen=True)
class Thresholds:
    round: int
    X_center: float
    X_lo: float
    X_hi: float
    Y_max: float
    Z2_max: float
    t1: float
    t2: float


def _np_power(n, p):
    if p <= 0:
        raise InvalidParameter("p must be positive for the (np)^(-3/2) terms")
    return (n * p) ** -1.5


def lemma_thresholds(n, eps, i, lam, p):
    """The three per-round bounds of round ``i`` and the radii t1, t2.

    ``p`` is the final edge probability ``eps**I`` of the schedule.
    """
    if not 0 < eps <= 1:
        raise InvalidParameter("eps must lie in (0, 1]")
    if i < 0:
        raise InvalidParameter("round index must be >= 0")
    c3 = math.comb(n, 3)
    nf = float(n)
    center = c3 * eps ** (3 * i)
    radius = 0.1 * lam * math.sqrt(nf ** 3 * eps ** (3 * i))
    if i > 0:
        radius += center * i * _np_power(n, p)
    nxt = c3 * eps ** (3 * (i + 1))
    t1 = nxt * _np_power(n, p) + 0.1 * (1.0 - eps ** 1.5) * lam * math.sqrt(nf ** 3 * eps ** (3 * (i + 1)))
    t2 = nf ** 4 * eps ** (5 * (i + 1)) * nf ** -0.25 + nxt
    z2 = nf ** 4 * eps ** (5 * i) * (1.0 + i * nf ** -0.25) + 10.0 * center
    return Thresholds(round=i, X_center=center, X_lo=center - radius, X_hi=center + radius,
                      Y_max=y_cap(n, eps, i, lam), Z2_max=z2, t1=t1, t2=t2)


@dataclass(frozen=True)
class InequalityRecord:
    name: str
    condition: str
    applicable: bool
    lhs: float
    rhs: float
    satisfied: bool = None

    @property
    def margin(self):
        """Relative slack ``(rhs - lhs) / |rhs|``."""
        return (self.rhs - self.lhs) / abs(self.rhs) if self.rhs else float("nan")


def case_inequality_check(n, eps, i, lam, p):
    """Evaluate the case-analysis steps of the concentration argument.

    Every record is ``lhs <= rhs``.  Records tied to a case of the split
    ``eps^i >= n^{-1/2}`` ("dense") versus ``eps^i < n^{-1/2}`` ("sparse")
    are only evaluated when their case holds; ``satisfied`` is None
    otherwise.
    """
    nf = float(n)
    ei = eps ** i
    dense = ei >= nf ** -0.5
    thr = lemma_thresholds(n, eps, i, lam, p)
    c3 = math.comb(n, 3)
    n4e5 = nf ** 4 * eps ** (5 * i)
    n3e3 = nf ** 3 * eps ** (3 * i)
    a = 4.0 * nf * eps ** (2 * i)
    nxt3 = nf ** 3 * eps ** (3 * (i + 1))
    growth = 1.0 + i * nf ** -0.25

    rows = [
        ("mcd1_denominator_dense", "dense", 2 * n4e5 + 2 * n3e3, 4 * n4e5),
        ("mcd1_denominator_sparse", "sparse", 2 * n4e5 + 2 * n3e3, 4 * n3e3),
        ("t1_floor_dense", "dense", 0.1 * nxt3 * _np_power(n, p), thr.t1),
        ("t1_floor_sparse", "sparse", 0.05 * lam * math.sqrt(nxt3), thr.t1),
        ("ycap_relaxation", "always", max(a + lam * math.sqrt(a), lam * lam), max(2 * a, 2 * lam * lam)),
        ("ey_next_round", "4n eps^2i >= lambda^2/4", a * eps * eps + eps * lam * math.sqrt(a * eps * eps),
         3 * a * eps * eps),
        ("ez_premise", "always",
         eps ** 5 * thr.Z2_max + 6 * c3 * eps ** (3 * (i + 1)),
         n4e5 * eps ** 5 * growth + 9 * c3 * eps ** (3 * (i + 1))),
        ("mcd2_denominator_dense", "dense", n4e5 + n3e3, 2 * n4e5),
        ("mcd2_denominator_sparse", "sparse", n4e5 + n3e3, 2 * n3e3),
        ("mcd2_ycap_sparse", "sparse", max(4 * a * a, 4 * lam ** 4), 4 * lam ** 4),
        ("t2_floor_dense", "dense", nf ** 4 * eps ** (5 * (i + 1)) * nf ** -0.25, thr.t2),
        ("t2_floor_sparse", "sparse", 0.1 * nxt3, thr.t2),
    ]
    out = []
    for name, cond, lhs, rhs in rows:
        if cond == "dense":
            ok = dense
        elif cond == "sparse":
            ok = not dense
        elif cond == "always":
            ok = True
        else:
            ok = a >= 0.25 * lam * lam
        out.append(InequalityRecord(name=name, condition=cond, applicable=ok, lhs=float(lhs),
                                    rhs=float(rhs), satisfied=real_le(lhs, rhs) if ok else None))
    return out


@dataclass(frozen=True)
class ConstraintRecord:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    relation: str = "<="


@dataclass(frozen=True)
class RegionReport:
    n: int
    p: float
    lam: float
    constraints: tuple
    lambda_over_log_n: float
    overall: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "overall", all(c.satisfied for c in self.constraints))

    def as_dict(self):
        return {
            "n": self.n, "p": self.p, "lambda": self.lam,
            "constraints": [c.__dict__ for c in self.constraints],
            "lambda_over_log_n": self.lambda_over_log_n,
            "overall": self.overall,
        }


def admissible_region(n, p, lam):
    """Check (n, p, lambda) against the parameter ranges of the tail theorem.

    The growth condition on lambda relative to ln n cannot be decided at a
    single point and is reported as the ratio ``lambda / ln n``.
    """
    if n < 3:
        raise InvalidParameter("n must be >= 3")
    ln = math.log(n)
    nf = float(n)
    rows = [
        ConstraintRecord("p_lower", p, ln ** 10 / nf, p >= ln ** 10 / nf, ">="),
        ConstraintRecord("p_upper", p, nf ** -0.5 * ln ** -10, p <= nf ** -0.5 * ln ** -10),
        ConstraintRecord("lambda_le_sqrt_np", lam, math.sqrt(nf * p), lam <= math.sqrt(nf * p)),
    ]
    cap = nf ** -0.75 * p ** -1.5 if p > 0 else math.inf
    rows.append(ConstraintRecord("lambda_le_n^-3/4_p^-3/2", lam, cap, lam <= cap))
    rows.append(ConstraintRecord("lambda_le_n^1/6", lam, nf ** (1 / 6), lam <= nf ** (1 / 6)))
    return RegionReport(n=n, p=p, lam=lam, constraints=tuple(rows), lambda_over_log_n=lam / ln)


@dataclass(frozen=True)
class CFit:
    c: float
    residuals: np.ndarray
    lambdas: np.ndarray
    tails: np.ndarray


def fit_c(tail_points):
    """Least-squares ``c`` in ``-ln(tail) ~ c * lambda^2`` through the origin."""
    pts = list(tail_points)
    if not pts:
        raise InvalidParameter("fit_c needs at least one point")
    lam = np.array([float(a) for a, _ in pts])
    tail = np.array([float(b) for _, b in pts])
    if (lam <= 0).any():
        raise InvalidParameter("lambdas must be positive")
    if ((tail <= 0) | (tail > 1)).any():
        raise InvalidParameter("tail fractions must lie in (0, 1]")
    x = lam ** 2
    y = -np.log(tail)
    c = float(np.dot(x, y) / np.dot(x, x))
    return CFit(c=c, residuals=y - c * x, lambdas=lam, tails=tail)
