import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fpa_lab.olo import (LEARNERS, MWU, FTRLEntropy, OGAPolytope, OGASimplex, make_learner,
                         pool_adjacent_violators, project_polytope, project_simplex)

vecs = st.integers(1, 12).flatmap(
    lambda n: arrays(float, n, elements=st.floats(-5, 5, allow_nan=False, allow_subnormal=False)))


def polytope_vertices(K):
    # extreme points of {1 >= p_1 >= ... >= p_K >= 0}: k leading ones
    return [np.r_[np.ones(k), np.zeros(K - k)] for k in range(K + 1)]


def test_simplex_projection_examples():
    assert np.allclose(project_simplex([2.0, 0.0]), [1, 0])
    v = np.array([0.2, 0.3, 0.5])
    assert np.allclose(project_simplex(v), v)
    assert np.allclose(project_simplex([0.0, 0.0, 0.0]), [1 / 3] * 3)


@given(vecs)
def test_simplex_projection_optimality(v):
    x = project_simplex(v)
    assert x.min() >= 0 and abs(x.sum() - 1) <= 1e-12
    # variational inequality <v - x, y - x> <= 0 over all vertices y certifies the projection
    for j in range(len(v)):
        y = np.zeros(len(v))
        y[j] = 1
        assert (v - x) @ (y - x) <= 1e-9
    assert np.allclose(project_simplex(x), x, atol=1e-12)


def test_simplex_projection_beats_random_points(rng):
    v = rng.normal(size=6) * 2
    x = project_simplex(v)
    W = rng.dirichlet(np.ones(6), 1000)
    assert np.all(np.linalg.norm(W - v, axis=1) >= np.linalg.norm(x - v) - 1e-12)


def test_pav_and_polytope_examples():
    assert np.allclose(project_polytope([0.2, 0.8]), [0.5, 0.5])
    assert np.allclose(project_polytope([1.5, 1.2]), [1, 1])
    assert np.allclose(project_polytope([0.9, 0.4, 0.1]), [0.9, 0.4, 0.1])
    assert np.allclose(pool_adjacent_violators([1, 3, 2, 0]), [2, 2, 2, 0])
    assert np.allclose(project_polytope([-1.0, 0.5]), [0, 0])


@given(vecs)
def test_polytope_projection_optimality(v):
    x = project_polytope(v)
    assert np.all(np.diff(x) <= 0) and x[0] <= 1 and x[-1] >= 0
    for y in polytope_vertices(len(v)):
        assert (v - x) @ (y - x) <= 1e-9
    assert np.array_equal(project_polytope(x), x)


def test_fresh_iterates():
    assert np.allclose(make_learner("mwu", 3).next(), [0.25] * 4)
    assert np.allclose(make_learner("oga-simplex", 3).next(), [0.25] * 4)
    assert np.array_equal(make_learner("oga-polytope", 3).next(), np.zeros(3))
    L = make_learner("ftrl-entropy", 1)
    L.next()[0] = 5
    assert np.allclose(L.next(), [0.5, 0.5])


def test_mwu_closed_form():
    # eta_scale chosen so that eta_1 = 1
    L = MWU(2, eta_scale=1 / math.sqrt(math.log(2)))
    x = L.update([1.0, 0.0]).next()
    assert np.allclose(x, [math.e / (math.e + 1), 1 / (math.e + 1)], atol=1e-15)


def test_shift_invariance_and_zero_gradient():
    L = MWU(4)
    L.update([0.3, -0.2, 0.1, 0.0])
    x = L.next()
    assert np.allclose(L.update([0.7] * 4).next(), x, atol=1e-15)
    O = OGASimplex(3)
    O.update([0.1, -0.1, 0.0])
    y = O.next()
    assert np.allclose(O.update(np.zeros(3)).next(), y)


def test_mwu_and_ftrl_agree_with_constant_eta():
    # with a fixed step the two updates generate the same softmax
    class Fixed(MWU):
        def eta(self, t):
            return 0.3

    class FixedF(FTRLEntropy):
        def eta(self, t):
            return 0.3

    a, b = Fixed(5), FixedF(5)
    rng = np.random.default_rng(3)
    for _ in range(50):
        g = rng.uniform(-1, 1, 5)
        a.update(g), b.update(g)
    assert np.allclose(a.next(), b.next(), atol=1e-12)


def test_update_errors():
    L = MWU(3)
    with pytest.raises(ValueError):
        L.update([0.1, 0.2])
    with pytest.raises(ValueError):
        L.update([0.0, 1.5, 0.0])
    L.update([1 + 1e-10, -1, 0])
    with pytest.raises(ValueError):
        make_learner("sgd", 3)
    with pytest.raises(ValueError):
        MWU(1)


def adversarial(rng, T, n, kind):
    if kind == "random":
        return rng.choice([-1.0, 1.0], size=(T, n))
    if kind == "switching":
        # the leader flips every block, the classic bad case for greedy play
        G = -np.ones((T, n))
        for t in range(T):
            G[t, (t // 37) % n] = 1.0
        return G
    G = np.zeros((T, n))
    G[:, 0] = np.where(np.arange(T) % 2 == 0, 1.0, -1.0)
    G[T // 2:, -1] = 1.0
    return G


def run_regret(L, G):
    gained = 0.0
    for g in G:
        gained += g @ L.next()
        L.update(g)
    return G.sum(axis=0).max() - gained


@pytest.mark.parametrize("kind", ["random", "switching", "late-leader"])
@pytest.mark.parametrize("K", [1, 7, 50])
def test_regret_bounds(kind, K):
    T = 3000
    G = adversarial(np.random.default_rng(K), T, K + 1, kind)
    assert run_regret(MWU(K + 1), G) <= 2 * math.sqrt(T * math.log(K + 1))
    assert run_regret(FTRLEntropy(K + 1), G) <= 2 * math.sqrt(T * math.log(K + 1))
    assert run_regret(OGASimplex(K + 1), G) <= 2 * math.sqrt(T * (K + 1))


def test_polytope_learner_regret():
    T, K = 3000, 10
    rng = np.random.default_rng(0)
    G = rng.choice([-1.0, 1.0], size=(T, K))
    L, gained = OGAPolytope(K), 0.0
    for g in G:
        gained += g @ L.next()
        L.update(g)
    cum = np.cumsum(G.sum(axis=0))
    best = max(0.0, cum.max())  # best vertex: k leading ones
    assert best - gained <= 2 * math.sqrt(T) * K


@pytest.mark.parametrize("kind", sorted(LEARNERS))
def test_feasible_and_deterministic(kind):
    K = 9
    G = np.random.default_rng(1).uniform(-1, 1, (400, K + 1 - (kind == "oga-polytope")))
    runs = []
    for _ in range(2):
        L, xs = make_learner(kind, K), []
        for g in G:
            L.update(g)
            xs.append(L.next())
        runs.append(np.array(xs))
    assert np.array_equal(runs[0], runs[1])
    X = runs[0]
    if kind == "oga-polytope":
        assert np.all(np.diff(X, axis=1) <= 0) and X.min() >= 0 and X.max() <= 1
    else:
        assert X.min() >= 0 and np.abs(X.sum(axis=1) - 1).max() <= 1e-12


def test_mwu_long_horizon_stable():
    L = MWU(3)
    for _ in range(20000):
        L.update([1.0, -1.0, -1.0])
    x = L.next()
    assert np.all(np.isfinite(x)) and x[0] == pytest.approx(1.0)
