import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fpa_lab import model

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES: list = []


def random_plcdf(rng, n_inner=None, atom=False):
    """Random strictly increasing piecewise-linear CDF with a few knots."""
    n = rng.integers(0, 8) if n_inner is None else n_inner
    xs = np.concatenate([[0.0], np.sort(rng.uniform(0.02, 0.98, n)), [1.0]])
    xs = np.unique(xs)
    inc = rng.exponential(1.0, len(xs) - 1) + 1e-3
    ys = np.concatenate([[0.0], np.cumsum(inc) / inc.sum()])
    ys[-1] = 1.0
    return model.PiecewiseLinearCDF(xs, ys)


def brute_force_benchmark(dist, win_prob, grid, xs):
    """Best per-round utility over all monotone threshold vectors drawn from ``xs``.

    ``win_prob[j]`` is the chance that bid ``b_j`` wins.  Exhaustive for K <= 3.
    """
    xs = np.asarray(xs, dtype=float)
    K = grid.K
    assert K <= 3
    # W_j(x) = P(win | b_j) * E[(v - b_j) 1(v <= x)], so an interval (a, c] is worth W_j(c) - W_j(a)
    pm = np.array([dist.partial_mean(0.0, x) for x in xs])
    F = np.asarray(dist.cdf(xs), dtype=float)
    F0 = float(dist.cdf(0.0))
    W = [win_prob[j] * (pm - grid.bids[j] * (F - F0)) for j in range(K + 1)]
    W1 = [win_prob[j] * (dist.partial_mean(0.0, 1.0) - grid.bids[j] * (1 - F0)) for j in range(K + 1)]
    n = len(xs)
    total = np.zeros((n,) * K)
    ok = np.ones((n,) * K, dtype=bool)
    on_axis = lambda arr, ax: arr.reshape([-1 if k == ax else 1 for k in range(K)])
    # axis a holds threshold v_{a+1}; bid j covers (v_j, v_{j+1}] with v_0 = 0, v_{K+1} = 1
    for j in range(K + 1):
        lo = 0.0 if j == 0 else on_axis(W[j], j - 1)
        hi = W1[j] if j == K else on_axis(W[j], j)
        total = total + hi - lo
    for j in range(K - 1):
        ok = ok & (on_axis(xs, j) <= on_axis(xs, j + 1))
    return float(np.max(np.where(ok, total, -np.inf)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
