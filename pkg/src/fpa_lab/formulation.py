"""Concave formulations of the one-shot bidding problem.

A monotone bidding strategy is described three equivalent ways:

* bidding quantiles ``p`` (length K): ``p_j = P(bid >= b_j)``, non-increasing;
* bidding probabilities ``q`` (length K+1): ``q_j = P(bid = b_{j-1})``, a
  point of the simplex;
* a :class:`ThresholdStrategy`: bid ``b_i`` on the value interval
  ``(v_i, v_{i+1}]``.

Index conventions: arrays are 0-based, so ``q[m]`` is the probability of bid
``b_m`` and ``p[m]`` is ``P(bid >= b_{m+1})``.  A competing bid ``h`` is given
either as a grid index (point mass) or as a :class:`CompetingBidDist`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import BidGrid, CompetingBidDist, ValueDistribution

SIMPLEX_TOL = 1e-12


class MembershipError(ValueError):
    """Vector outside the simplex or the quantile polytope."""


def check_probs(q, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a simplex point, renormalising rounding drift up to ``tol``."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or len(q) < 2:
        raise MembershipError("bidding probabilities must be a vector of length K+1 >= 2")
    lo, s = q.min(), q.sum()
    if lo < -tol or not math.isfinite(s):
        raise MembershipError(f"negative or non-finite bidding probability: min {lo}")
    if abs(s - 1.0) > tol:
        raise MembershipError(f"bidding probabilities sum to {s!r}, not 1")
    if s != 1.0 or lo < 0:
        q = np.maximum(q, 0.0)
        q = q / q.sum()
    return q


def check_quantiles(p, tol: float = 0.0) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) < 1:
        raise MembershipError("bidding quantiles must be a vector of length K >= 1")
    if (np.any(p < -tol) or np.any(p > 1 + tol) or np.any(np.diff(p) > tol)
            or not np.all(np.isfinite(p))):
        raise MembershipError(f"not in the quantile polytope: {p}")
    return np.clip(p, 0.0, 1.0)


def quantiles_to_probs(p) -> np.ndarray:
    """``q_i = p_{i-1} - p_i`` with ``p_0 = 1`` and ``p_{K+1} = 0``."""
    p = check_quantiles(p)
    ext = np.concatenate([[1.0], p, [0.0]])
    return ext[:-1] - ext[1:]


def probs_to_quantiles(q) -> np.ndarray:
    """``p_i = sum_{l > i} q_l``."""
    q = check_probs(q)
    tail = np.cumsum(q[::-1])[::-1]     # tail[m] = sum_{l >= m} q[l]
    return np.minimum(tail[1:], 1.0)


def prefix_sums(q) -> np.ndarray:
    """``S_i = q_1 + ... + q_i`` for i = 0..K+1, pinned to exactly 0 and 1 at the ends."""
    q = np.asarray(q, dtype=float)
    s = np.empty(len(q) + 1)
    s[0] = 0.0
    np.cumsum(q, out=s[1:])
    s[-1] = 1.0
    np.clip(s, 0.0, 1.0, out=s)
    return s


def _h_weights(h, size: int):
    """(indices, weights) of the competing-bid distribution."""
    if isinstance(h, CompetingBidDist):
        w = h.weights
    elif np.ndim(h) == 0:
        i = int(h)
        if not 0 <= i < size:
            raise IndexError(f"competing bid index {i} outside 0..{size - 1}")
        return (i,), (1.0,)
    else:
        w = CompetingBidDist(h).weights
    if len(w) != size:
        raise ValueError("competing-bid distribution has the wrong length")
    idx = np.flatnonzero(w)
    return tuple(int(i) for i in idx), tuple(float(w[i]) for i in idx)


def _payment_tails(q, bids) -> np.ndarray:
    # tails[i] = sum_{j >= i} b_j q_{j+1}   (0-based: sum_{m >= i} b_m q[m])
    return np.cumsum((bids * q)[::-1])[::-1]


def _qi_to_one(dist: ValueDistribution, a: float) -> float:
    # arguments come from clipped prefix sums, so the public range checks are skipped
    a = min(max(float(a), 0.0), 1.0)
    return 0.0 if a >= 1.0 else dist._quantile_integral(a, 1.0)


def utility_q(q, dist: ValueDistribution, h, grid: BidGrid) -> float:
    """Expected utility of bidding probabilities ``q`` against ``h``."""
    q = check_probs(q)
    s = prefix_sums(q)
    tails = _payment_tails(q, grid.bids)
    total = 0.0
    for i, w in zip(*_h_weights(h, len(q))):
        total += w * (_qi_to_one(dist, s[i]) - tails[i])
    return total


def revenue_q(q, h, grid: BidGrid) -> float:
    q = check_probs(q)
    tails = _payment_tails(q, grid.bids)
    return float(sum(w * tails[i] for i, w in zip(*_h_weights(h, len(q)))))


def gradient_q(q, dist: ValueDistribution, h_index: int, grid: BidGrid) -> np.ndarray:
    """Gradient of ``utility_q`` against a point-mass competing bid ``b_i``.

    Coordinates below ``i`` are zero and coordinate ``m >= i`` is
    ``F^-(S_i) - b_m``.  This differs from the raw partial derivatives by a
    multiple of the all-ones vector, which is invisible on the simplex.
    """
    q = np.asarray(q, dtype=float)
    i = int(h_index)
    if not 0 <= i <= grid.K:
        raise IndexError(f"competing bid index {i} outside 0..{grid.K}")
    if len(q) != grid.size:
        raise ValueError("dimension mismatch between q and grid")
    s_i = 1.0 if i == len(q) else min(max(float(np.sum(q[:i])), 0.0), 1.0)
    g = float(dist._quantile(np.asarray(s_i))) - grid.bids
    g[:i] = 0.0
    return g


def gradient_p(p, dist: ValueDistribution, h_index: int, grid: BidGrid) -> np.ndarray:
    """Gradient of the quantile-space utility against competing bid ``b_i``."""
    p = check_quantiles(p)
    i = int(h_index)
    if not 0 <= i <= grid.K:
        raise IndexError(f"competing bid index {i} outside 0..{grid.K}")
    g = np.full(len(p), -grid.eps)
    if i >= 1:
        g[:i - 1] = 0.0
        g[i - 1] = float(dist._quantile(np.asarray(1.0 - p[i - 1]))) - grid.bids[i]
    return g


def revenue_p(p, h_index: int, grid: BidGrid) -> float:
    """``b_i p_i + eps * sum_{j > i} p_j`` (with ``p_0 = 1``)."""
    p = check_quantiles(p)
    i = int(h_index)
    p_i = 1.0 if i == 0 else p[i - 1]
    return float(grid.bids[i] * p_i + grid.eps * np.sum(p[i:]))


@dataclass(frozen=True)
class ThresholdStrategy:
    """Monotone left-continuous strategy: bid ``b_i`` on ``(v_i, v_{i+1}]``, bid 0 at 0.

    ``thresholds`` has length K+2 with ``v_0 = 0`` and ``v_{K+1} = 1``.
    """

    thresholds: np.ndarray

    def __post_init__(self):
        v = np.array(self.thresholds, dtype=float)
        if v.ndim != 1 or len(v) < 3 or v[0] != 0.0 or v[-1] != 1.0 or (v[1:] < v[:-1]).any():
            raise ValueError(f"invalid thresholds {v}")
        v.setflags(write=False)
        object.__setattr__(self, "thresholds", v)

    @classmethod
    def constant(cls, index: int, K: int) -> "ThresholdStrategy":
        """Bid ``b_index`` for every positive value."""
        v = np.concatenate([[0.0], np.zeros(index), np.ones(K - index), [1.0]])
        return cls(v)

    @classmethod
    def from_cutoffs(cls, cutoffs, K: int) -> "ThresholdStrategy":
        """Build from the inner thresholds ``v_1..v_K``."""
        return cls(np.concatenate([[0.0], np.asarray(cutoffs, dtype=float), [1.0]]))

    @property
    def K(self) -> int:
        return len(self.thresholds) - 2

    @property
    def inner(self) -> np.ndarray:
        return self.thresholds[1:-1]

    def bid_index(self, v):
        """Index of the bid placed at value ``v``."""
        out = np.searchsorted(self.inner, v, side="left")
        return int(out) if np.ndim(out) == 0 else out


def strategy_from_probs(q, dist: ValueDistribution) -> ThresholdStrategy:
    """Strategy whose thresholds are the quantiles of the prefix sums of ``q``."""
    th = np.asarray(dist._quantile(prefix_sums(check_probs(q))), dtype=float)
    th[0], th[-1] = 0.0, 1.0
    return ThresholdStrategy(np.maximum.accumulate(th))


def _threshold_cdf(s: ThresholdStrategy, dist: ValueDistribution) -> np.ndarray:
    # F(v_0), ..., F(v_{K+1}) with F(v_{K+1}) pinned to 1
    f = np.asarray(dist._cdf(s.thresholds), dtype=float).copy()
    f[-1] = 1.0
    return np.maximum.accumulate(f)


def probs_of_strategy(s: ThresholdStrategy, dist: ValueDistribution) -> np.ndarray:
    """Probability of each bid when values are drawn from ``dist``.

    ``q_1`` is the mass of ``[0, v_1]``, including any atom at zero.
    """
    f = _threshold_cdf(s, dist)
    return np.diff(np.concatenate([[0.0], f[1:]]))


def _grid_of(s: ThresholdStrategy, grid: BidGrid):
    if grid.K != s.K:
        raise ValueError(f"strategy has K={s.K}, grid has K={grid.K}")


def strategy_utility(s: ThresholdStrategy, dist: ValueDistribution, h, grid: BidGrid) -> float:
    """Expected utility of a threshold strategy, in closed form from the thresholds."""
    _grid_of(s, grid)
    f = _threshold_cdf(s, dist)
    K = grid.K
    # tail_f[i] = sum_{j=i+1}^{K} F(v_j)
    inner = f[1:K + 1]
    tail_f = np.concatenate([np.cumsum(inner[::-1])[::-1], [0.0]])
    total = 0.0
    for i, w in zip(*_h_weights(h, K + 1)):
        total += w * (_qi_to_one(dist, f[i]) + grid.bids[i] * f[i]
                      - grid.bids[K] + grid.eps * tail_f[i])
    return total


def strategy_revenue(s: ThresholdStrategy, dist: ValueDistribution, h, grid: BidGrid) -> float:
    _grid_of(s, grid)
    q = probs_of_strategy(s, dist)
    tails = _payment_tails(q, grid.bids)
    return float(sum(w * tails[i] for i, w in zip(*_h_weights(h, grid.size))))


def strategy_outcome(s: ThresholdStrategy, dist: ValueDistribution, h_index: int,
                     grid: BidGrid) -> tuple[float, float]:
    """(expected utility, expected revenue) against a point-mass competing bid.

    Revenue is ``b_K - b_i F(v_i) - eps * sum_{j>i} F(v_j)`` and utility is
    ``E[v 1(v > v_i)]`` minus that.
    """
    f = _threshold_cdf(s, dist)
    K, i = grid.K, int(h_index)
    rev = grid.bids[K] - grid.bids[i] * f[i] - grid.eps * float(np.sum(f[i + 1:K + 1]))
    return _qi_to_one(dist, f[i]) - rev, rev
