import dataclasses
import math

import numpy as np
import pytest

from triconc.bounds import expected_X, variance_X
from triconc.errors import ConfigError, InvalidParameter
from triconc.graph_core import run_process, sample_gnp
from triconc.lemma_monitor import evaluate_trace
from triconc.montecarlo import (ExperimentConfig, Sample, compare_distributions, empirical_tail,
                                enumerate_exact, ks_critical, run_ensemble, wilson_interval)
from triconc.rng import Stream
from triconc.triangle_stats import count_triangles

from oracles import exact_law


def test_config_validation():
    cfg = ExperimentConfig(n=100, p=0.05)
    assert (cfg.trials, cfg.eps_max, cfg.mode) == (10_000, 0.2, "both") and cfg.threads >= 1
    for kw, field in [({"p": 1.5}, "p"), ({"p": 0.0}, "p"), ({"lambda_grid": (2, 1)}, "lambda_grid"),
                      ({"trials": 0}, "trials"), ({"mode": "x"}, "mode"), ({"lambda_grid": (-1, 1)}, "lambda_grid")]:
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig(**{"n": 100, "p": 0.05, **kw})
        assert exc.value.field == field


@pytest.mark.parametrize("n", [3, 4, 5, 6])
@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
def test_enumeration_against_python_loop(n, p):
    dist = enumerate_exact(n, p)
    ref = exact_law(n, p)
    assert dict(dist.support).keys() == ref.keys()
    for x, q in dist.support:
        assert q == pytest.approx(ref[x], rel=1e-12, abs=1e-300)
    assert math.fsum(dist.probs) == pytest.approx(1.0, abs=1e-12)
    assert dist.mean() == pytest.approx(expected_X(n, p), rel=1e-9)
    assert dist.variance() == pytest.approx(variance_X(n, p), rel=1e-9)
    assert dist.values.min() >= 0 and dist.values.max() <= math.comb(n, 3)


def test_enumeration_examples():
    d = enumerate_exact(3, 0.4)
    assert d.pmf(1) == pytest.approx(0.4**3) and d.pmf(0) == pytest.approx(1 - 0.4**3)
    assert enumerate_exact(4, 0.5).pmf(4) == 1 / 64
    d = enumerate_exact(4, 0.3)
    assert len(d.support) == 4  # X never equals 3 on four vertices
    assert d.mean() == pytest.approx(0.108, rel=1e-12)
    with pytest.raises(InvalidParameter, match="28"):
        enumerate_exact(9, 0.5)


def test_trivial_ensemble():
    ens = run_ensemble(ExperimentConfig(n=7, p=1.0, trials=1, threads=1))
    assert ens.x_direct[0] == ens.x_iterated[0] == 35


def test_ensemble_reproducible_from_seed_and_index():
    cfg = ExperimentConfig(n=25, p=0.2, trials=600, master_seed=9, threads=1, rounds=2)
    ens = run_ensemble(cfg)
    for t in (0, 255, 256, 599):
        tr = run_process(25, ens.schedule, Stream(9, t))
        assert [dataclasses.astuple(s) for s in tr.per_round] == \
               [dataclasses.astuple(ens.round_stats(t, i)) for i in range(3)]
        assert ens.report(t) == evaluate_trace(tr, ens.lemma_lambda)
        assert ens.x_direct[t] == count_triangles(sample_gnp(25, 0.2, Stream(9, t)))
    assert ens.seeds[5] == (9, 5)


def test_thread_count_does_not_change_results():
    base = dict(n=40, p=0.1, trials=1500, master_seed=3, rounds=2)
    a = run_ensemble(ExperimentConfig(threads=1, **base))
    b = run_ensemble(ExperimentConfig(threads=8, **base))
    assert np.array_equal(a.x_direct, b.x_direct)
    assert np.array_equal(a.round_table, b.round_table)
    assert np.array_equal(a.flags, b.flags)


def test_iterated_edge_means_per_round():
    cfg = ExperimentConfig(n=50, p=0.04, trials=4000, threads=1, mode="iterated", rounds=2)
    ens = run_ensemble(cfg)
    m = math.comb(50, 2)
    for i in range(3):
        q = ens.schedule.eps ** i
        edges = ens.round_table[:, i, 0]
        assert abs(edges.mean() - m * q) <= 4 * math.sqrt(m * q * (1 - q) / cfg.trials) + 1e-12
        assert (ens.round_table[:, i, 3] == 3 * ens.round_table[:, i, 1]).all()


def test_modes_agree_n60():
    cfg = ExperimentConfig(n=60, p=0.09, trials=20_000, eps_max=0.3, threads=1)
    ens = run_ensemble(cfg)
    assert ens.schedule.rounds == 2
    xd, xi = ens.x_direct.astype(float), ens.x_iterated.astype(float)
    se = math.sqrt(xd.var(ddof=1) / xd.size + xi.var(ddof=1) / xi.size)
    assert abs(xd.mean() - xi.mean()) < 4 * se
    rep = compare_distributions(ens, ens, mode_a="direct", mode_b="iterated")
    assert rep.max_cdf_gap < rep.ks_critical_99


def test_tail_examples():
    cfg = ExperimentConfig(n=4, p=0.5, trials=100_000, mode="direct", threads=1)
    ens = run_ensemble(cfg)
    assert empirical_tail(ens, 0.0).fraction == 1.0
    t = empirical_tail(ens, 1.0)
    exact = enumerate_exact(4, 0.5).tail(1.0)
    assert t.ci_lo <= exact <= t.ci_hi
    assert empirical_tail(ens, 4 / t.scale + 1e-9).fraction == 0.0
    fr = [empirical_tail(ens, x).fraction for x in np.linspace(0, 5, 30)]
    assert all(b <= a for a, b in zip(fr, fr[1:]))
    assert 0 <= t.ci_lo <= t.fraction <= t.ci_hi <= 1
    with pytest.raises(InvalidParameter):
        empirical_tail(Sample(np.array([1]), 3, 1.0), 1.0)


def test_wilson_interval():
    assert wilson_interval(0, 50)[0] == 0.0
    assert wilson_interval(50, 50)[1] == 1.0
    lo, hi = wilson_interval(30, 100)
    assert lo == pytest.approx(0.2189, abs=1e-4) and hi == pytest.approx(0.3958, abs=1e-4)


def test_compare_distributions():
    s = Sample(np.array([0, 1, 1, 2, 5]), 4, 0.5)
    rep = compare_distributions(s, s)
    assert rep.tv == 0 and rep.max_cdf_gap == 0 and rep.moment_gaps == (0, 0, 0, 0)
    with pytest.raises(InvalidParameter):
        compare_distributions(s, enumerate_exact(4, 0.3))
    wide = Sample(np.arange(0, 5000), 40, 0.5)
    assert compare_distributions(wide, wide, max_bins=16).tv == 0
    assert ks_critical(20_000, 20_000) == pytest.approx(1.6276 * math.sqrt(2 / 20_000), rel=1e-3)


def test_direct_against_exact_n4():
    ens = run_ensemble(ExperimentConfig(n=4, p=0.5, trials=100_000, mode="direct", threads=1))
    assert compare_distributions(ens, enumerate_exact(4, 0.5)).tv <= 0.02
