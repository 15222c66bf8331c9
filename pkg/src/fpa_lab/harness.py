"""The online loop, the exact hindsight benchmark and the episode metrics.

All theorem checks use the expected-value ledger: for every round the trace
stores the exact conditional expectations of utility and revenue given the
round's strategy and the realised competing bid, next to the realised payoff.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .agents import Bidder, Seller, UnknownDistBidder
from .formulation import ThresholdStrategy, strategy_outcome
from .model import BidGrid, ValueDistribution, myerson_revenue

LEDGER_TOL = 1e-8
AUDIT_TOL = 1e-9


class LookaheadError(IndexError):
    """A seller tried to read the current or a future round."""


class HistoryView:
    """Read-only access to rounds ``0..n-1`` (0-based) of a running episode."""

    def __init__(self, trace: "EpisodeTrace", n: int, oracle_q=None):
        self._trace = trace
        self._n = n
        self.oracle_q = oracle_q

    def __len__(self):
        return self._n

    def _span(self, start, stop):
        stop = self._n if stop is None else stop
        if stop > self._n or start < 0:
            raise LookaheadError(f"rounds {start}..{stop - 1} not yet played (history has {self._n})")
        return slice(start, stop)

    def bid_indices(self, start=0, stop=None):
        return self._trace.bid_index[self._span(start, stop)].copy()

    def h_indices(self, start=0, stop=None):
        return self._trace.h_index[self._span(start, stop)].copy()

    def values(self, start=0, stop=None):
        return self._trace.values[self._span(start, stop)].copy()

    def bid_index(self, tau: int) -> int:
        if not 0 <= tau < self._n:
            raise LookaheadError(f"round {tau} not yet played (history has {self._n})")
        return int(self._trace.bid_index[tau])


@dataclass
class EpisodeTrace:
    grid: BidGrid
    dist: ValueDistribution
    T: int
    seed: int
    delta: Optional[float]
    bidder_kind: str
    values: np.ndarray
    bid_index: np.ndarray
    h_index: np.ndarray
    exp_utility: np.ndarray
    exp_revenue: np.ndarray
    realized_utility: np.ndarray
    realized_payment: np.ndarray
    gdotq: np.ndarray
    grad_sum: np.ndarray
    lemma6_gap: Optional[np.ndarray] = None
    lemma6_bound: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    gradients: Optional[np.ndarray] = None

    @classmethod
    def empty(cls, grid, dist, T, seed, delta, bidder_kind, *, unknown=False, record_vectors=False):
        z = lambda dtype=float: np.zeros(T, dtype=dtype)
        return cls(grid, dist, T, seed, delta, bidder_kind, z(), z(np.int64), z(np.int64),
                   z(), z(), z(), z(), z(), np.zeros(grid.size),
                   lemma6_gap=z() if unknown else None, lemma6_bound=z() if unknown else None,
                   q=np.zeros((T, grid.size)) if record_vectors else None,
                   gradients=np.zeros((T, grid.size)) if record_vectors else None)

    @property
    def known_distribution(self) -> bool:
        return self.bidder_kind == "known"

    def h_counts(self) -> np.ndarray:
        return np.bincount(self.h_index, minlength=self.grid.size).astype(float)


@dataclass
class EpisodeConfig:
    grid: BidGrid
    dist: ValueDistribution
    bidder: Bidder
    seller: Seller
    T: int
    seed: int = 1
    delta: Optional[float] = None
    record_vectors: bool = False


def value_stream(dist: ValueDistribution, T: int, seed: int) -> np.ndarray:
    """Values for rounds 1..T from a counter-based generator keyed by ``seed``."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    return np.asarray(dist.sample(rng, T), dtype=float).reshape(T)


def run_episode(config: EpisodeConfig) -> EpisodeTrace:
    """Play T rounds: seller moves on history, bidder sees its value, payoff, feedback."""
    grid, dist, bidder, seller, T = config.grid, config.dist, config.bidder, config.seller, config.T
    if T < 0:
        raise ValueError("T must be non-negative")
    unknown = isinstance(bidder, UnknownDistBidder)
    trace = EpisodeTrace.empty(grid, dist, T, config.seed, config.delta, bidder.kind,
                               unknown=unknown, record_vectors=config.record_vectors)
    if T == 0:
        return trace
    values = value_stream(dist, T, config.seed)
    bids = grid.bids
    wants_oracle = getattr(seller, "oracle", False)
    for t in range(T):
        view = HistoryView(trace, t, bidder.peek_q() if wants_oracle else None)
        h = int(seller.choose(view))
        if not 0 <= h <= grid.K:
            raise ValueError(f"seller returned bid index {h} outside the grid")
        v = values[t]
        b, s, q = bidder.begin_round(v)
        u_exp, r_exp = strategy_outcome(s, dist, h, grid)
        g = bidder.finish_round(h)

        trace.values[t] = v
        trace.bid_index[t] = b
        trace.h_index[t] = h
        trace.exp_utility[t] = u_exp
        trace.exp_revenue[t] = r_exp
        won = b >= h
        trace.realized_utility[t] = (v - bids[b]) if won else 0.0
        trace.realized_payment[t] = bids[b] if won else 0.0
        trace.gdotq[t] = g @ q
        trace.grad_sum += g
        if unknown:
            trace.lemma6_gap[t] = np.abs(q - bidder.q_prime).sum()
            trace.lemma6_bound[t] = 2.0 * bidder.estimate.alpha
        if config.record_vectors:
            trace.q[t] = q
            trace.gradients[t] = g
    return trace


def hindsight_benchmark(dist: ValueDistribution, h_counts, grid: BidGrid):
    """Best fixed strategy against the empirical competing-bid frequencies.

    Bid ``b_i`` wins with probability ``G_i`` (the frequency of ``h <= b_i``),
    so the pointwise best bid at value v maximises ``G_i (v - b_i)``.  Returns
    ``(total value over the rounds, strategy)``.
    """
    counts = np.asarray(h_counts, dtype=float)
    if counts.shape != (grid.size,) or np.any(counts < 0):
        raise ValueError("h_counts must be a non-negative vector of length K+1")
    T = counts.sum()
    if T == 0:
        return 0.0, ThresholdStrategy.constant(0, grid.K)
    segs = upper_envelope(np.cumsum(counts) / T, grid.bids)
    strategy = _envelope_strategy(segs, grid.K)
    G = np.cumsum(counts) / T
    total = 0.0
    for (i, lo), nxt in zip(segs, segs[1:] + [(None, 1.0)]):
        hi = nxt[1]
        if hi <= lo or G[i] == 0.0:
            continue
        mass = float(dist._cdf(np.asarray(hi))) - float(dist._cdf(np.asarray(lo)))
        total += G[i] * (dist.partial_mean(lo, hi) - grid.bids[i] * mass)
    return float(T * total), strategy


def upper_envelope(G, bids):
    """Segments ``[(bid index, start value), ...]`` of ``max_i G_i (v - b_i)`` on [0, 1].

    Ties go to the lower bid, and at a switch point the value belongs to the
    lower segment.
    """
    hull: list = []
    for i in range(len(G)):
        slope = G[i]
        if hull and slope <= G[hull[-1][0]]:
            continue        # same win probability at a higher price
        start = 0.0
        while hull:
            j, js = hull[-1]
            x = (G[i] * bids[i] - G[j] * bids[j]) / (G[i] - G[j])
            if x <= js:
                hull.pop()
                continue
            start = x
            break
        hull.append((i, start))
    return [(i, float(s)) for i, s in hull if s < 1.0]


def _envelope_strategy(segs, K: int) -> ThresholdStrategy:
    cut = np.ones(K)
    starts = {i: s for i, s in segs}
    nxt = 1.0
    # v_k is the start of the first envelope bid with index >= k
    for k in range(K, 0, -1):
        if k in starts:
            nxt = starts[k]
        cut[k - 1] = nxt
    return ThresholdStrategy.from_cutoffs(cut, K)


def linearized_regret(trace: EpisodeTrace) -> tuple[float, float]:
    """(max over simplex vertices, value at ``q^0``) of ``sum_t <g_t, e - q_t>``."""
    if trace.T == 0:
        return 0.0, 0.0
    lin = float(trace.gdotq.sum())
    return float(trace.grad_sum.max()) - lin, float(trace.grad_sum[0]) - lin


def robustness_gap(trace: EpisodeTrace, myer: Optional[float] = None) -> float:
    myer = myerson_revenue(trace.dist) if myer is None else myer
    return float(trace.exp_revenue.sum() - myer * trace.T)


def theorem2_audit(trace: EpisodeTrace, dist: Optional[ValueDistribution] = None,
                   myer: Optional[float] = None) -> float:
    """Largest per-round ``r_t + <g_t, q_t> - Myer(F)``; non-positive up to rounding."""
    if trace.T == 0:
        return -math.inf
    myer = myerson_revenue(dist or trace.dist) if myer is None else myer
    return float(np.max(trace.exp_revenue + trace.gdotq) - myer)


def lemma6_violation(trace: EpisodeTrace) -> float:
    """Largest ``||q_t - q'_t||_1 - 2 alpha_t`` over an unknown-distribution trace."""
    if trace.lemma6_gap is None or trace.T == 0:
        return -math.inf
    return float(np.max(trace.lemma6_gap - trace.lemma6_bound))


@dataclass
class MetricsReport:
    T: int
    K: int
    seed: int
    total_utility: float
    benchmark: float
    regret: float
    lregret: float
    lregret_vs_q0: float
    myer: float
    rev_gap: float
    theorem2_max_violation: float
    lemma6_max_violation: float
    benchmark_strategy: Optional[ThresholdStrategy] = field(default=None, repr=False)

    def summary_row(self) -> dict:
        return {
            "seed": self.seed, "T": self.T, "K": self.K,
            "regret_ledger": self.regret, "lregret": self.lregret,
            "lregret_vs_q0": self.lregret_vs_q0, "rev_gap": self.rev_gap, "myer": self.myer,
            "benchmark": self.benchmark,
            "theorem2_max_violation": self.theorem2_max_violation,
        }

    def violations(self, known: bool) -> list[str]:
        out = []
        if known and self.T > 0:
            if self.theorem2_max_violation > AUDIT_TOL:
                out.append(f"theorem2 audit: max violation {self.theorem2_max_violation:.3g}")
            if self.regret > self.lregret + LEDGER_TOL:
                out.append(f"regret {self.regret:.6g} exceeds linearized regret {self.lregret:.6g}")
        if self.lemma6_max_violation > 1e-12:
            out.append(f"lemma 6 bound violated by {self.lemma6_max_violation:.3g}")
        return out


def evaluate(trace: EpisodeTrace, myer: Optional[float] = None) -> MetricsReport:
    myer = myerson_revenue(trace.dist) if myer is None else myer
    bench, s_star = hindsight_benchmark(trace.dist, trace.h_counts(), trace.grid)
    total_u = float(trace.exp_utility.sum())
    lreg, lreg0 = linearized_regret(trace)
    t2 = theorem2_audit(trace, myer=myer) if trace.known_distribution else math.nan
    return MetricsReport(
        T=trace.T, K=trace.grid.K, seed=trace.seed, total_utility=total_u, benchmark=bench,
        regret=bench - total_u, lregret=lreg, lregret_vs_q0=lreg0, myer=myer,
        rev_gap=robustness_gap(trace, myer), theorem2_max_violation=t2,
        lemma6_max_violation=lemma6_violation(trace), benchmark_strategy=s_star)


def concat_traces(a: EpisodeTrace, b: EpisodeTrace) -> EpisodeTrace:
    """Two consecutive stretches of play against the same distribution as one trace."""
    if a.grid != b.grid or a.dist is not b.dist:
        raise ValueError("traces must share grid and distribution")
    cat = lambda x, y: None if x is None or y is None else np.concatenate([x, y])
    return EpisodeTrace(
        a.grid, a.dist, a.T + b.T, a.seed, a.delta, a.bidder_kind,
        *(np.concatenate([getattr(a, f), getattr(b, f)]) for f in
          ("values", "bid_index", "h_index", "exp_utility", "exp_revenue",
           "realized_utility", "realized_payment", "gdotq")),
        a.grad_sum + b.grad_sum,
        lemma6_gap=cat(a.lemma6_gap, b.lemma6_gap), lemma6_bound=cat(a.lemma6_bound, b.lemma6_bound),
        q=cat(a.q, b.q), gradients=cat(a.gradients, b.gradients))


ROUND_COLUMNS = ("t", "value", "bid_index", "h_index", "exp_utility", "exp_revenue",
                 "realized_utility", "realized_payment", "lgrad_dot_q",
                 "cum_regret_ledger", "cum_rev_gap")


def round_rows(trace: EpisodeTrace, report: MetricsReport):
    """Per-round records; the regret column is cumulative against the final hindsight strategy."""
    grid, dist = trace.grid, trace.dist
    if trace.T == 0:
        return
    s_star = report.benchmark_strategy
    star_u = np.array([strategy_outcome(s_star, dist, h, grid)[0] for h in range(grid.size)])
    cum_reg = np.cumsum(star_u[trace.h_index] - trace.exp_utility)
    cum_gap = np.cumsum(trace.exp_revenue) - report.myer * np.arange(1, trace.T + 1)
    for t in range(trace.T):
        yield (t + 1, repr(float(trace.values[t])), int(trace.bid_index[t]), int(trace.h_index[t]),
               repr(float(trace.exp_utility[t])), repr(float(trace.exp_revenue[t])),
               repr(float(trace.realized_utility[t])), repr(float(trace.realized_payment[t])),
               repr(float(trace.gdotq[t])), repr(float(cum_reg[t])), repr(float(cum_gap[t])))


def write_round_csv(trace: EpisodeTrace, report: MetricsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROUND_COLUMNS)
        w.writerows(round_rows(trace, report))


def write_lemma6_csv(trace: EpisodeTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "l1_gap", "bound"))
        for t in range(trace.T):
            w.writerow((t + 1, repr(float(trace.lemma6_gap[t])), repr(float(trace.lemma6_bound[t]))))
