"""Check each round of a percolation trace against the per-round bounds."""

from dataclasses import dataclass

import numpy as np

from .bounds import REL_SLACK, int_ge, int_le, lemma_thresholds
from .errors import InvalidParameter

_I64_MAX = np.iinfo(np.int64).max


@dataclass(frozen=True)
class RoundVerdict:
    """Outcome of the three checks for one round.

    Margins are signed relative slacks: for the X interval the distance to
    the nearer endpoint over the half-width, for Y and sum Z^2 the
    distance below the ceiling over the ceiling.  Zero means on the
    boundary, negative means violated.
    """

    round: int
    x_ok: bool
    y_ok: bool
    z2_ok: bool
    x_margin: float
    y_margin: float
    z2_margin: float
    y_approximate: bool = False

    @property
    def ok(self):
        return self.x_ok and self.y_ok and self.z2_ok


@dataclass(frozen=True)
class LemmaReport:
    verdicts: tuple
    all_rounds_ok: bool
    first_failure: int = None


def _rel(slack, scale):
    return slack / scale if scale else (0.0 if slack == 0 else float("inf") * np.sign(slack))


def evaluate_round(stats, thr):
    if stats.round != thr.round:
        raise InvalidParameter(f"stats round {stats.round} does not match thresholds round {thr.round}")
    half = 0.5 * (thr.X_hi - thr.X_lo)
    x_ok = int_ge(stats.X, thr.X_lo) and int_le(stats.X, thr.X_hi)
    return RoundVerdict(
        round=stats.round,
        x_ok=x_ok,
        y_ok=int_le(stats.maxY, thr.Y_max),
        z2_ok=int_le(stats.sumZ2, thr.Z2_max),
        x_margin=_rel(min(stats.X - thr.X_lo, thr.X_hi - stats.X), half),
        y_margin=_rel(thr.Y_max - stats.maxY, thr.Y_max),
        z2_margin=_rel(thr.Z2_max - stats.sumZ2, thr.Z2_max),
        y_approximate=not getattr(stats, "maxY_exact", True),
    )


def report_from_verdicts(verdicts):
    verdicts = tuple(verdicts)
    first = next((v.round for v in verdicts if not v.ok), None)
    return LemmaReport(verdicts=verdicts, all_rounds_ok=first is None, first_failure=first)


def trace_thresholds(n, schedule, lam):
    return [lemma_thresholds(n, schedule.eps, i, lam, schedule.target_p)
            for i in range(schedule.rounds + 1)]


def evaluate_trace(trace, lam):
    thrs = trace_thresholds(trace.n, trace.schedule, lam)
    return report_from_verdicts(evaluate_round(s, t) for s, t in zip(trace.per_round, thrs))


def _floor_bound(threshold):
    return int(np.floor(threshold + REL_SLACK * abs(threshold)))


def _le_array(values, threshold):
    bound = _floor_bound(threshold)
    if values.dtype == object:
        return np.array([v <= bound for v in values], dtype=bool)
    if bound >= _I64_MAX:
        return np.ones(values.shape, dtype=bool)
    return values <= bound


def _ge_array(values, threshold):
    bound = int(np.ceil(threshold - REL_SLACK * abs(threshold)))
    if bound <= 0:
        return np.ones(values.shape, dtype=bool)
    if bound > _I64_MAX:
        return np.zeros(values.shape, dtype=bool)
    return values >= bound


def evaluate_round_arrays(x, max_y, sum_z2, thr):
    """Vectorised :func:`evaluate_round` over many trials of one round.

    Returns the three boolean flag arrays and the three margin arrays.
    """
    x_ok = _ge_array(x, thr.X_lo) & _le_array(x, thr.X_hi)
    y_ok = _le_array(max_y, thr.Y_max)
    z2_ok = _le_array(sum_z2, thr.Z2_max)
    half = 0.5 * (thr.X_hi - thr.X_lo)
    xf = x.astype(np.float64)
    zf = sum_z2.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_margin = np.minimum(xf - thr.X_lo, thr.X_hi - xf) / half
        y_margin = (thr.Y_max - max_y.astype(np.float64)) / thr.Y_max
        z2_margin = (thr.Z2_max - zf) / thr.Z2_max
    return (x_ok, y_ok, z2_ok), (x_margin, y_margin, z2_margin)
