"""Bidders and sellers for the repeated auction.

A bidder plays two half-rounds: ``begin_round(v)`` fixes this round's
strategy and bid after seeing the value, and ``finish_round(h)`` takes the
revealed competing bid and feeds the learner.  A seller picks ``h_t`` from a
history view holding rounds ``1..t-1`` only (see ``harness.HistoryView``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import estimation
from .formulation import (ThresholdStrategy, gradient_p, gradient_q, probs_of_strategy,
                          quantiles_to_probs, strategy_from_probs)
from .model import BidGrid, ConstructionError, ValueDistribution
from .olo import Learner, OGAPolytope


class RoundOrderError(RuntimeError):
    pass


class Bidder:
    kind = "base"

    def __init__(self, grid: BidGrid):
        self.grid = grid
        self._open = False
        self.t = 0
        self.q: Optional[np.ndarray] = None
        self.strategy: Optional[ThresholdStrategy] = None

    def peek_q(self) -> np.ndarray:
        """Bidding probabilities the next round will use (oracle sellers only)."""
        raise NotImplementedError

    def begin_round(self, v: float):
        if self._open:
            raise RoundOrderError("begin_round called twice without finish_round")
        self._open = True
        self.t += 1
        self.strategy, self.q = self._strategy_for(v)
        return self.strategy.bid_index(v), self.strategy, self.q

    def finish_round(self, h_index: int) -> np.ndarray:
        if not self._open:
            raise RoundOrderError("finish_round called before begin_round")
        self._open = False
        return self._feedback(int(h_index))


class _LearningBidder(Bidder):
    def __init__(self, grid: BidGrid, learner: Learner):
        super().__init__(grid)
        self.learner = learner
        self._polytope = isinstance(learner, OGAPolytope)

    def peek_q(self):
        x = self.learner.next()
        return quantiles_to_probs(x) if self._polytope else x

    def _feed(self, dist: ValueDistribution, h: int) -> np.ndarray:
        g = gradient_q(self.q, dist, h, self.grid)
        if self._polytope:
            self.learner.update(gradient_p(self._p, dist, h, self.grid))
        else:
            self.learner.update(g)
        return g

    def _next_q(self):
        x = self.learner.next()
        if self._polytope:
            self._p = x
            return quantiles_to_probs(x)
        return x


class KnownDistBidder(_LearningBidder):
    """Reduction from OLO over the simplex with the value distribution known."""

    kind = "known"

    def __init__(self, grid: BidGrid, learner: Learner, dist: ValueDistribution):
        super().__init__(grid, learner)
        self.dist = dist

    def _strategy_for(self, v):
        q = self._next_q()
        return strategy_from_probs(q, self.dist), q

    def _feedback(self, h):
        return self._feed(self.dist, h)


class UnknownDistBidder(_LearningBidder):
    """Reduction with the value distribution replaced by the dominated estimate.

    The estimate for round t includes that round's value and uses the
    confidence level ``delta / T``.
    """

    kind = "unknown"

    def __init__(self, grid: BidGrid, learner: Learner, horizon: int, delta: float):
        super().__init__(grid, learner)
        if horizon < 1:
            raise ConstructionError("horizon must be >= 1")
        if not 0.0 < delta < 1.0:
            raise ConstructionError("delta must lie in (0, 1)")
        self.horizon = horizon
        self.delta = delta
        self.samples = estimation.SampleLog(capacity=min(horizon, 1 << 20))
        self.estimate: Optional[estimation.DominatedEmpirical] = None
        self.q_prime: Optional[np.ndarray] = None

    @property
    def round_delta(self) -> float:
        return self.delta / self.horizon

    def _strategy_for(self, v):
        q = self._next_q()
        self.samples.add(v)
        interp = estimation.InterpolatedEmpiricalCDF.from_log(self.samples, copy=False)
        self.estimate = est = estimation.DominatedEmpirical(
            interp, estimation.alpha(self.samples.t, self.round_delta))
        s = strategy_from_probs(q, est)
        self.q_prime = probs_of_strategy(s, est)
        return s, q

    def _feedback(self, h):
        return self._feed(self.estimate, h)


class ScriptedBidder(Bidder):
    """Plays ``schedule(t)``; learns nothing."""

    kind = "scripted"

    def __init__(self, grid: BidGrid, dist: ValueDistribution,
                 schedule: Callable[[int], ThresholdStrategy]):
        super().__init__(grid)
        self.dist = dist
        self.schedule = schedule

    def peek_q(self):
        return probs_of_strategy(self.schedule(self.t + 1), self.dist)

    def _strategy_for(self, v):
        s = self.schedule(self.t)
        return s, probs_of_strategy(s, self.dist)

    def _feedback(self, h):
        return np.zeros(self.grid.size)


def example1_strategies(grid: BidGrid):
    """The two scripted strategies of the negative-regret example.

    First half: bid 0 up to 1/4, then 1/4.  Second half: bid 1/8 up to 1/2,
    then 1/4.
    """
    lo, hi = grid.index_of(0.125), grid.index_of(0.25)
    K = grid.K

    def cutoffs(spec):
        # spec: list of (bid index, right end of its value interval), increasing
        cut = np.ones(K)
        prev_end, prev_idx = 0.0, 0
        for idx, end in spec:
            cut[prev_idx:idx] = prev_end
            prev_end, prev_idx = end, idx
        cut[prev_idx:] = 1.0
        return ThresholdStrategy.from_cutoffs(cut, K)

    first = cutoffs([(0, 0.25), (hi, 1.0)])
    second = cutoffs([(lo, 0.5), (hi, 1.0)])
    return first, second


def example1_bidder(grid: BidGrid, dist: ValueDistribution, horizon: int) -> ScriptedBidder:
    first, second = example1_strategies(grid)
    half = horizon // 2
    return ScriptedBidder(grid, dist, lambda t: first if t <= half else second)


# sellers ---------------------------------------------------------------

class Seller:
    kind = "base"

    def choose(self, history) -> int:
        raise NotImplementedError


@dataclass
class FixedSeller(Seller):
    index: int
    kind = "fixed"

    def choose(self, history):
        return self.index


@dataclass
class ScheduleSeller(Seller):
    """Piecewise-constant ``h_t`` from rows ``(t_start, t_end, bid_index)``, inclusive."""

    rows: list
    kind = "schedule"

    def index_at(self, t: int) -> int:
        for start, end, idx in self.rows:
            if start <= t <= end:
                return idx
        raise LookupError(f"schedule does not cover round {t}")

    def choose(self, history):
        return self.index_at(len(history) + 1)

    def check_covers(self, horizon: int, K: int):
        for start, end, idx in self.rows:
            if not 0 <= idx <= K:
                raise ConstructionError(f"schedule bid index {idx} outside 0..{K}")
        covered = np.zeros(horizon + 2, dtype=bool)
        for start, end, _ in self.rows:
            covered[max(start, 1):min(end, horizon) + 1] = True
        missing = np.flatnonzero(~covered[1:horizon + 1])
        if len(missing):
            raise ConstructionError(f"schedule does not cover round {missing[0] + 1}")


def parse_schedule(text: str, source: str = "<schedule>") -> ScheduleSeller:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ConstructionError(f"{source}:{lineno}: expected t_start<TAB>t_end<TAB>bid_index")
        try:
            start, end, idx = (int(p) for p in parts)
        except ValueError:
            raise ConstructionError(f"{source}:{lineno}: non-integer field") from None
        if start < 1 or end < start:
            raise ConstructionError(f"{source}:{lineno}: bad round range {start}..{end}")
        rows.append((start, end, idx))
    return ScheduleSeller(rows)


def load_schedule(path) -> ScheduleSeller:
    path = Path(path)
    return parse_schedule(path.read_text(), str(path))


def example1_schedule(grid: BidGrid, horizon: int) -> ScheduleSeller:
    """``h = 1/4`` for the first half of the rounds, ``1/8`` after (rounded down onto the grid)."""
    half = horizon // 2
    return ScheduleSeller([(1, half, grid.floor_index(0.25)),
                           (half + 1, max(horizon, half + 1), grid.floor_index(0.125))])


@dataclass
class AdaptiveGreedySeller(Seller):
    """Best response to the smoothed empirical frequency of past bids.

    ``objective="posted"`` picks the competing bid ``b_i`` maximising
    ``b_i * P(bid >= b_i)`` under the estimate, i.e. treats the bid
    distribution as a demand curve.  ``objective="first-price"`` maximises the
    first-price revenue ``sum_{j >= i} b_j q_j``; that is non-increasing in i,
    so this variant always answers ``h = 0`` and is kept only for comparison.
    With ``oracle=True`` the seller reads the bidder's current bidding
    probabilities instead (a stress instrument, not a realistic seller).
    """

    grid: BidGrid
    oracle: bool = False
    objective: str = "posted"
    counts: np.ndarray = field(init=False)
    seen: int = field(init=False, default=0)
    kind = "adaptive-greedy"

    def __post_init__(self):
        if self.objective not in ("posted", "first-price"):
            raise ConstructionError(f"unknown seller objective {self.objective!r}")
        self.counts = np.ones(self.grid.size)

    def choose(self, history):
        n = len(history)
        if n == self.seen + 1:
            self.counts[history.bid_index(n - 1)] += 1.0
            self.seen = n
        elif n > self.seen:
            np.add.at(self.counts, history.bid_indices(self.seen, n), 1.0)
            self.seen = n
        q_hat = history.oracle_q if self.oracle else self.counts / self.counts.sum()
        if self.objective == "posted":
            score = self.grid.bids * np.cumsum(q_hat[::-1])[::-1]
        else:
            score = np.cumsum((self.grid.bids * q_hat)[::-1])[::-1]
        return int(np.argmax(score))


def monopoly_index(dist: ValueDistribution, grid: BidGrid) -> int:
    """Grid reserve with the largest posted-price revenue."""
    b = grid.bids
    return int(np.argmax(b * (1.0 - np.asarray(dist._cdf(b)))))
