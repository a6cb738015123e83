import os

import pytest
from hypothesis import HealthCheck, settings

# first calls into numba kernels compile (or load from cache); no per-example deadline
settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timing-sensitive tests see steady state."""
    from triconc.graph_core import make_complete, percolate, sample_gnp
    from triconc.triangle_stats import count_triangles, round_stats

    g = sample_gnp(40, 0.3, 1)
    count_triangles(g)
    round_stats(g)
    round_stats(g, all_pairs=False)
    round_stats(percolate(make_complete(30), 0.5, 2))
