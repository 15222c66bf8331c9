import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from conftest import random_plcdf
from fpa_lab import estimation, model
from fpa_lab.formulation import (MembershipError, ThresholdStrategy, check_probs, gradient_p,
                                 gradient_q, prefix_sums, probs_of_strategy, probs_to_quantiles,
                                 quantiles_to_probs, revenue_p, revenue_q, strategy_from_probs,
                                 strategy_outcome, strategy_revenue, strategy_utility, utility_q)
from fpa_lab.model import BidGrid, CompetingBidDist

seeds = st.integers(0, 2**32 - 1)
G1 = BidGrid(1, 0.5)
U = model.uniform()

# scipy quadrature of (v - bid) f(v) over each bidding interval, frozen
EX1_FIRST_HALF_U = 0.15815986941684704
EX1_SECOND_HALF_U = 0.21355326698684016


def rand_simplex(rng, n):
    return rng.dirichlet(np.full(n, 0.7))


def rand_quantiles(rng, K):
    return np.sort(rng.random(K))[::-1]


def test_maps_examples():
    assert np.allclose(quantiles_to_probs([0.7]), [0.3, 0.7])
    assert np.array_equal(quantiles_to_probs(np.zeros(3)), [1, 0, 0, 0])
    assert np.array_equal(quantiles_to_probs(np.ones(3)), [0, 0, 0, 1])
    assert np.allclose(probs_to_quantiles([0.3, 0.7]), [0.7])
    assert np.array_equal(probs_to_quantiles([1, 0, 0]), [0, 0])


@given(seeds, st.integers(1, 30))
def test_maps_roundtrip(seed, K):
    rng = np.random.default_rng(seed)
    q = rand_simplex(rng, K + 1)
    assert np.allclose(quantiles_to_probs(probs_to_quantiles(q)), q, atol=1e-12)
    p = rand_quantiles(rng, K)
    assert np.allclose(probs_to_quantiles(quantiles_to_probs(p)), p, atol=1e-12)


def test_membership_errors():
    with pytest.raises(MembershipError):
        quantiles_to_probs([0.2, 0.5])
    with pytest.raises(MembershipError):
        quantiles_to_probs([1.2])
    with pytest.raises(MembershipError):
        probs_to_quantiles([0.5, 0.6])
    with pytest.raises(MembershipError):
        check_probs([-0.1, 1.1])
    q = check_probs([0.5, 0.5 + 1e-13])
    assert q.sum() == 1.0


def test_prefix_sums_pinned():
    s = prefix_sums([0.1] * 10)
    assert s[0] == 0.0 and s[-1] == 1.0


def test_utility_revenue_examples():
    assert utility_q([1, 0], U, 0, G1) == pytest.approx(0.5)
    assert utility_q([0, 1], U, 0, G1) == pytest.approx(0.0, abs=1e-15)
    assert revenue_q([0, 1], 0, G1) == pytest.approx(0.5)
    assert revenue_q([1, 0, 0], CompetingBidDist([0.2, 0.3, 0.5]), BidGrid(2, 0.5)) == 0.0


def test_gradient_examples():
    assert np.allclose(gradient_q([0.5, 0.5], U, 1, G1), [0, 0])
    assert np.allclose(gradient_q([0.5, 0.5], U, 0, G1), [0, -0.5])
    g = BidGrid(3, 0.25)
    corner = gradient_q([1, 0, 0, 0], U, 3, g)
    assert np.array_equal(corner[:3], [0, 0, 0]) and corner[3] == pytest.approx(U.quantile(1.0) - 0.75)
    g2 = BidGrid(2, 1 / 3)
    assert np.allclose(gradient_p([0.6, 0.2], U, 1, g2), [0.4 - 1 / 3, -1 / 3])
    assert np.allclose(gradient_p([0.6, 0.2], U, 0, g2), [-1 / 3, -1 / 3])
    with pytest.raises(IndexError):
        gradient_q([0.5, 0.5], U, 2, G1)


def test_revenue_p_examples():
    assert revenue_p([0.0], 0, G1) == 0.0
    assert revenue_p([1.0], 1, G1) == pytest.approx(0.5)


def test_strategy_examples():
    s = strategy_from_probs([0.5, 0.5], U)
    assert np.allclose(s.thresholds, [0, 0.5, 1])
    assert s.bid_index(0.5) == 0 and s.bid_index(0.5000001) == 1 and s.bid_index(0.0) == 0
    z = strategy_from_probs([1, 0, 0], U)
    assert z.bid_index(1.0) == 0
    D = estimation.DominatedEmpirical(estimation.interpolated_cdf([0.25, 0.75]), 0.2)
    s = strategy_from_probs([0.1, 0.9], D)
    assert s.thresholds[1] == 0.0 and s.bid_index(1e-9) == 1


def test_probs_of_strategy_dominated_case():
    D = estimation.DominatedEmpirical(estimation.interpolated_cdf([0.25, 0.75]), 0.1)
    q = np.array([0.05, 0.03, 0.92])
    qp = probs_of_strategy(strategy_from_probs(q, D), D)
    assert np.allclose(qp, [0.1, 0.0, 0.9], atol=1e-12)
    assert np.abs(q - qp).sum() <= 2 * 0.1 + 1e-12
    assert np.array_equal(probs_of_strategy(ThresholdStrategy.constant(0, 2), U), [1, 0, 0])


def test_threshold_strategy_validation():
    with pytest.raises(ValueError):
        ThresholdStrategy([0, 0.6, 0.4, 1])
    with pytest.raises(ValueError):
        ThresholdStrategy([0.1, 0.5, 1])
    s = ThresholdStrategy.constant(2, 3)
    assert list(s.inner) == [0, 0, 1] and s.K == 3


def test_strategy_utility_trivial():
    F = model.example1()
    zero = ThresholdStrategy.constant(0, 2)
    g = BidGrid(2, 0.125)
    assert strategy_utility(zero, F, 0, g) == pytest.approx(F.mean, abs=1e-14)
    assert strategy_utility(zero, F, 1, g) == pytest.approx(0.0, abs=1e-15)
    assert strategy_revenue(zero, F, CompetingBidDist([0.3, 0.3, 0.4]), g) == 0.0


def test_example1_strategy_values():
    F, g = model.example1(), BidGrid(2, 0.125)
    first = ThresholdStrategy([0, 0.25, 0.25, 1])
    second = ThresholdStrategy([0, 0, 0.5, 1])
    assert strategy_revenue(first, F, 2, g) == pytest.approx(1 / 8, abs=1e-12)
    u1, u2 = strategy_utility(first, F, 2, g), strategy_utility(second, F, 1, g)
    assert u1 == pytest.approx(EX1_FIRST_HALF_U, abs=1e-12)
    assert u2 == pytest.approx(EX1_SECOND_HALF_U, abs=1e-12)
    assert (u1 + u2) / 2 == pytest.approx(math.log(18) / 16 + 1 / 192, abs=1e-12)
    r = strategy_revenue(first, F, 2, g) + strategy_revenue(second, F, 1, g)
    assert r / 2 == pytest.approx(9 / 64, abs=1e-12)
    # the same per-round utility through the simplex formulation
    assert utility_q(probs_of_strategy(second, F), F, 1, g) == pytest.approx(u2, abs=1e-10)
    best = ThresholdStrategy([0, 0.125, 0.375, 1])
    d = CompetingBidDist([0, 0.5, 0.5])
    assert strategy_utility(best, F, d, g) == pytest.approx(math.log(12) / 16 + 1 / 48, abs=1e-12)


def _quad_strategy_utility(s, F: model.PiecewiseLinearCDF, h, grid):
    """E[(v - b(v)) 1(b(v) >= b_h)] by quadrature over each bidding interval."""
    dens = np.diff(F.ys) / np.diff(F.xs)
    f = lambda x: dens[min(np.searchsorted(F.xs, x, side="right") - 1, len(dens) - 1)]
    total = 0.0
    th = s.thresholds
    for j in range(h, grid.K + 1):
        lo, hi = th[j], th[j + 1]
        if hi > lo:
            pts = [x for x in F.xs if lo < x < hi]
            total += integrate.quad(lambda v: (v - grid.bids[j]) * f(v), lo, hi, points=pts or None,
                                    epsabs=1e-13, limit=200)[0]
    return total


@given(seeds)
def test_strategy_utility_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 6))
    grid = BidGrid(K, rng.uniform(0.3, 1.0) / K)
    F = random_plcdf(rng)
    s = ThresholdStrategy.from_cutoffs(np.sort(rng.random(K)), K)
    h = int(rng.integers(0, K + 1))
    assert strategy_utility(s, F, h, grid) == pytest.approx(_quad_strategy_utility(s, F, h, grid), abs=1e-9)


@given(seeds)
def test_strategy_and_simplex_forms_agree(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 12))
    grid = BidGrid.uniform(K)
    F = random_plcdf(rng)
    s = ThresholdStrategy.from_cutoffs(np.sort(rng.random(K)), K)
    d = CompetingBidDist(rand_simplex(rng, K + 1))
    q = probs_of_strategy(s, F)
    assert strategy_utility(s, F, d, grid) == pytest.approx(utility_q(q, F, d, grid), abs=1e-10)
    assert strategy_revenue(s, F, d, grid) == pytest.approx(revenue_q(q, d, grid), abs=1e-12)
    h = int(rng.integers(0, K + 1))
    u, r = strategy_outcome(s, F, h, grid)
    assert u == pytest.approx(strategy_utility(s, F, h, grid), abs=1e-12)
    assert r == pytest.approx(strategy_revenue(s, F, h, grid), abs=1e-12)


@given(seeds)
def test_strategy_probs_roundtrip(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 20))
    F = random_plcdf(rng) if seed % 2 else model.example1()
    q = rand_simplex(rng, K + 1)
    assert np.allclose(probs_of_strategy(strategy_from_probs(q, F), F), q, atol=1e-12)


@given(seeds)
def test_concavity(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 10))
    grid, F = BidGrid.uniform(K), random_plcdf(rng)
    d = CompetingBidDist(rand_simplex(rng, K + 1))
    q1, q2 = rand_simplex(rng, K + 1), rand_simplex(rng, K + 1)
    lam = rng.random()
    mid = utility_q(lam * q1 + (1 - lam) * q2, F, d, grid)
    assert mid >= lam * utility_q(q1, F, d, grid) + (1 - lam) * utility_q(q2, F, d, grid) - 1e-9


@given(seeds)
def test_gradient_bound_and_tangent_finite_difference(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 10))
    grid = BidGrid(K, rng.uniform(0.5, 1.0) / K)
    F = random_plcdf(rng) if seed % 3 else model.example1()
    q = rand_simplex(rng, K + 1) * 0.9 + 0.1 / (K + 1)
    h = int(rng.integers(0, K + 1))
    g = gradient_q(q, F, h, grid)
    assert np.max(np.abs(g)) <= 1.0
    j, k = rng.choice(K + 1, 2, replace=False)
    step = 1e-6
    e = np.zeros(K + 1)
    e[j], e[k] = 1, -1
    fd = (utility_q(q + step * e, F, h, grid) - utility_q(q - step * e, F, h, grid)) / (2 * step)
    assert fd == pytest.approx(g[j] - g[k], abs=1e-5)


@given(seeds)
def test_gradient_p_matches_finite_difference(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 8))
    grid, F = BidGrid.uniform(K), model.uniform()
    p = np.sort(rng.uniform(0.05, 0.95, K))[::-1]
    if np.min(np.abs(np.diff(p))) < 1e-4 if K > 1 else False:
        return
    h = int(rng.integers(0, K + 1))
    g = gradient_p(p, F, h, grid)
    u = lambda pp: utility_q(quantiles_to_probs(pp), F, h, grid)
    for j in range(K):
        e = np.zeros(K)
        e[j] = 1e-7
        assert (u(p + e) - u(p - e)) / 2e-7 == pytest.approx(g[j], abs=1e-5)


@given(seeds)
def test_theorem2_identity_and_bound(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 30))
    grid = BidGrid(K, rng.uniform(0.2, 1.0) / K)
    F = [model.uniform(), model.example1(), random_plcdf(rng)][seed % 3]
    p = rand_quantiles(rng, K)
    h = int(rng.integers(0, K + 1))
    lhs = gradient_p(p, F, h, grid) @ p + revenue_p(p, h, grid)
    p_i = 1.0 if h == 0 else p[h - 1]
    assert lhs == pytest.approx(p_i * F.quantile(1 - p_i), abs=1e-12)
    assert lhs <= model.myerson_revenue(F) + 1e-9


@given(seeds)
def test_revenue_p_equals_revenue_q(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 40))
    grid, p = BidGrid.uniform(K), rand_quantiles(rng, K)
    h = int(rng.integers(0, K + 1))
    assert revenue_p(p, h, grid) == pytest.approx(revenue_q(quantiles_to_probs(p), h, grid), abs=1e-12)


@given(seeds)
def test_corollary1_transfer(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 30))
    grid, F = BidGrid.uniform(K), random_plcdf(rng)
    q = rand_simplex(rng, K + 1)
    h = int(rng.integers(0, K + 1))
    q0 = np.zeros(K + 1)
    q0[0] = 1
    p = probs_to_quantiles(q)
    lhs = gradient_q(q, F, h, grid) @ (q0 - q)
    rhs = gradient_p(p, F, h, grid) @ (0 - p)
    assert lhs == pytest.approx(rhs, abs=1e-12)
    assert gradient_q(q, F, h, grid) @ q0 == 0.0 or h == 0
