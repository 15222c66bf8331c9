"""Value-distribution estimates built from observed values.

Three stages, each a function of the sorted sample log:

* the empirical step CDF ``F_t``,
* the continuous interpolation ``F~_t`` through ``(0, 0)``,
  ``(V_(l), (l - 1/2)/t)`` and ``(1, 1)``,
* the dominated estimate ``F^_t = min(1, F~_t + alpha)`` which puts an atom
  of size ``alpha`` at zero so that, with high probability, the true value
  distribution stochastically dominates it.

The interpolation knots are equally spaced in probability, so the quantile of
``F~_t`` is located by arithmetic rather than search.  Evaluations never
materialise the knot arrays; ``to_piecewise`` does, for serialisation and
exact integrals.
"""

from __future__ import annotations

import ctypes
import logging
import math
from functools import cached_property
from typing import Optional

import numpy as np

from .model import (ConstructionError, DomainError, PiecewiseLinearCDF, ValueDistribution,
                    dump_plcdf)

log = logging.getLogger(__name__)

SAMPLE_FLOOR = 2.0 ** -40
SAMPLE_CEIL = 1.0 - 2.0 ** -40


def alpha(t: int, delta: float) -> float:
    """Confidence radius ``sqrt(ln(2/delta) / (2t)) + 1/(2t)``."""
    if t < 1 or int(t) != t:
        raise DomainError(f"t must be a positive integer, got {t}")
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * t)) + 1.0 / (2.0 * t)


def dkw_radius(t: int, delta: float) -> float:
    return math.sqrt(math.log(2.0 / delta) / (2.0 * t))


class SampleLog:
    """Sorted multiset of observed values, kept in a growable buffer.

    Values are clamped into ``[2^-40, 1 - 2^-40]`` and exact duplicates are
    nudged upward by one ulp at a time until distinct; ``repairs`` counts both.
    The buffer carries the interpolation end knots 0 and 1 around the samples.
    """

    def __init__(self, values=(), capacity: int = 16):
        self._buf = np.empty(max(capacity, 16) + 2)
        self._buf[0] = 0.0
        self._buf[1] = 1.0
        self._n = 0
        self.repairs = 0
        self.version = 0
        for v in values:
            self.add(v)

    def __len__(self):
        return self._n

    @property
    def t(self) -> int:
        return self._n

    @property
    def sorted_values(self) -> np.ndarray:
        """Read-only view of the sorted samples; invalidated by ``add``."""
        view = self._buf[1:self._n + 1]
        view.flags.writeable = False
        return view

    def add(self, v: float) -> float:
        """Insert ``v``; returns the value actually stored."""
        v = float(v)
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"value {v} outside [0, 1]")
        if v < SAMPLE_FLOOR or v > SAMPLE_CEIL:
            v = min(max(v, SAMPLE_FLOOR), SAMPLE_CEIL)
            self.repairs += 1
        n = self._n
        buf = self._buf
        pos = 1 + int(np.searchsorted(buf[1:n + 1], v, side="left"))
        if pos <= n and buf[pos] == v:
            self.repairs += 1
            v0, p0 = v, pos
            # stored values are distinct, so each ulp step can only collide with the next one
            while pos <= n and buf[pos] == v:
                v = math.nextafter(v, 2.0)
                pos += 1
            if v > SAMPLE_CEIL:
                # no room above the ceiling: step down instead
                v, pos = v0, p0
                while pos >= 1 and buf[pos] == v:
                    v = math.nextafter(v, -1.0)
                    pos -= 1
                pos += 1
                if v < SAMPLE_FLOOR:
                    raise ConstructionError("cannot separate duplicate samples")
        if n + 2 == len(buf):
            self._buf = buf = np.concatenate([buf, np.empty(len(buf))])
        # shift the tail up one slot in place; numpy would stage overlapping copies
        ctypes.memmove(buf.ctypes.data + (pos + 1) * 8, buf.ctypes.data + pos * 8, (n + 2 - pos) * 8)
        buf[pos] = v
        self.version += 1
        self._n = n + 1
        if self.repairs and self.repairs % 1000 == 1:
            log.warning("sample log repaired %d boundary/duplicate values", self.repairs)
        return v

    def knots(self, copy: bool = True) -> np.ndarray:
        """``0, V_(1), ..., V_(t), 1``; without ``copy`` a view that ``add`` invalidates."""
        out = self._buf[:self._n + 2]
        if copy:
            out = out.copy()
        out.setflags(write=False)
        return out

    def snapshot(self) -> np.ndarray:
        out = self._buf[1:self._n + 1].copy()
        out.setflags(write=False)
        return out


def _as_sorted_samples(samples) -> np.ndarray:
    if isinstance(samples, SampleLog):
        return samples.snapshot()
    arr = np.array(samples, dtype=float)
    if arr.ndim != 1 or len(arr) == 0:
        raise ConstructionError("need a non-empty 1-d sample set")
    if np.any(arr <= 0) or np.any(arr >= 1):
        raise ConstructionError("samples must lie strictly inside (0, 1)")
    arr = np.sort(arr)
    if np.any(np.diff(arr) <= 0):
        raise ConstructionError("samples must be pairwise distinct")
    arr.setflags(write=False)
    return arr


class InterpolatedEmpiricalCDF(ValueDistribution):
    """Strictly increasing piecewise-linear interpolation of the empirical CDF.

    Built from the sorted samples, or from the knot vector ``0, V_(1..t), 1``
    that ``SampleLog.knots`` returns.
    """

    kind = "piecewise-linear"

    def __init__(self, sorted_samples: np.ndarray, *, knots: Optional[np.ndarray] = None,
                 source: Optional["SampleLog"] = None):
        self._source = source
        self._version = source.version if source is not None else 0
        if knots is None:
            s = np.asarray(sorted_samples, dtype=float)
            knots = np.concatenate([[0.0], s, [1.0]])
        self.xs = knots
        self.t = len(knots) - 2
        if self.t <= 0:
            raise ConstructionError("empty sample set")

    @classmethod
    def from_log(cls, log_: "SampleLog", copy: bool = True) -> "InterpolatedEmpiricalCDF":
        """Estimate from a sample log.

        With ``copy=False`` the estimate shares the log's buffer and refuses to
        evaluate once the log has grown.
        """
        return cls(None, knots=log_.knots(copy), source=None if copy else log_)

    def _fresh(self):
        if self._source is not None and self._source.version != self._version:
            raise RuntimeError("estimate is stale: its sample log has changed")

    @property
    def samples(self) -> np.ndarray:
        return self.xs[1:-1]

    @property
    def breakpoints(self):
        return tuple(self.samples)

    def _level(self, k):
        # level of knot k: 0 at k = 0, (k - 1/2)/t inside, 1 at k = t + 1
        return np.minimum(np.maximum((k - 0.5) / self.t, 0.0), 1.0)

    def _cdf(self, x):
        self._fresh()
        x = np.asarray(x, dtype=float)
        xs, t = self.xs, self.t
        k = np.minimum(np.searchsorted(xs, x, side="right") - 1, t)
        x0, x1 = xs[k], xs[k + 1]
        y0 = np.maximum((k - 0.5) / t, 0.0)
        y1 = np.minimum((k + 0.5) / t, 1.0)
        # x = 1 falls in the last segment and evaluates to 1
        out = np.minimum(y0 + (y1 - y0) * (x - x0) / (x1 - x0), y1)
        return out if out.ndim else out[()]

    def quantile_scalar(self, y: float) -> float:
        self._fresh()
        if y <= 0.0:
            return 0.0
        t = self.t
        k = min(max(math.ceil(y * t + 0.5), 1), t + 1)
        y0 = max((k - 1.5) / t, 0.0)
        y1 = min((k - 0.5) / t, 1.0)
        frac = min(max((y - y0) / (y1 - y0), 0.0), 1.0)
        x0 = float(self.xs[k - 1])
        return x0 + frac * (float(self.xs[k]) - x0)

    def _quantile(self, y):
        self._fresh()
        if np.ndim(y) == 0:
            return self.quantile_scalar(float(y))
        y = np.asarray(y, dtype=float)
        t = self.t
        # first knot whose level is >= y
        kf = np.minimum(np.maximum(np.ceil(y * t + 0.5), 1.0), t + 1.0)
        k = kf.astype(np.intp)
        x0, x1 = self.xs[k - 1], self.xs[k]
        y0 = np.maximum((kf - 1.5) / t, 0.0)
        y1 = np.minimum((kf - 0.5) / t, 1.0)
        # y <= 0 lands on the first knot with frac 0, i.e. at x = 0
        frac = np.minimum(np.maximum((y - y0) / (y1 - y0), 0.0), 1.0)
        out = x0 + frac * (x1 - x0)
        return out if out.ndim else out[()]

    @cached_property
    def _pl(self) -> PiecewiseLinearCDF:
        self._fresh()
        t = self.t
        xs = self.xs
        ys = np.concatenate([[0.0], (np.arange(1, t + 1) - 0.5) / t, [1.0]])
        return PiecewiseLinearCDF(xs, ys)

    def to_piecewise(self) -> PiecewiseLinearCDF:
        return self._pl

    def _quantile_integral(self, a, b):
        return self._pl._quantile_integral(a, b)

    def _partial_mean(self, a, b):
        return self._pl._partial_mean(a, b)

    def __repr__(self):
        return f"InterpolatedEmpiricalCDF(t={self.t})"


class DominatedEmpirical(ValueDistribution):
    """``F^(x) = min(1, F~(x) + alpha)``: interpolated estimate with an atom at 0."""

    kind = "dominated-empirical"

    def __init__(self, interpolated: InterpolatedEmpiricalCDF, shift: float):
        if shift < 0:
            raise ConstructionError("alpha must be non-negative")
        self.interpolated = interpolated
        self.alpha = float(shift)

    @property
    def atom(self) -> float:
        return min(1.0, self.alpha)

    @property
    def breakpoints(self):
        return self.interpolated.breakpoints

    def _cdf(self, x):
        return np.minimum(1.0, self.interpolated._cdf(x) + self.alpha)

    def _quantile(self, y):
        a = self.alpha
        if np.ndim(y) == 0:
            y = float(y)
            return 0.0 if y <= a else self.interpolated.quantile_scalar(min(y - a, 1.0))
        # the atom absorbs y <= alpha; the interpolated quantile maps y <= 0 to 0
        return self.interpolated._quantile(np.minimum(np.asarray(y, dtype=float) - a, 1.0))

    @cached_property
    def _pl(self) -> PiecewiseLinearCDF:
        base = self.interpolated.to_piecewise()
        a = self.alpha
        if a >= 1.0:
            return PiecewiseLinearCDF([0.0, 1.0], [1.0, 1.0], allow_atom=True)
        ys = base.ys + a
        k = int(np.searchsorted(ys, 1.0, side="left"))   # first knot reaching the cap
        xs = list(base.xs[:k])
        yv = list(ys[:k])
        x_cap = float(base._quantile(np.asarray(1.0 - a)))
        if x_cap > xs[-1]:
            xs.append(x_cap)
            yv.append(1.0)
        else:
            yv[-1] = 1.0
        if xs[-1] < 1.0:
            xs.append(1.0)
            yv.append(1.0)
        return PiecewiseLinearCDF(xs, yv, allow_atom=True)

    def to_piecewise(self) -> PiecewiseLinearCDF:
        return self._pl

    def _quantile_integral(self, a, b):
        return self._pl._quantile_integral(a, b)

    def _partial_mean(self, a, b):
        return self._pl._partial_mean(a, b)

    def dumps(self) -> str:
        """``plcdf v1`` text with the leading ``atom0`` line."""
        text = dump_plcdf(self._pl)
        if not text.startswith("atom0"):
            text = f"atom0 {self.atom!r}\n" + text
        return text

    def __repr__(self):
        return f"DominatedEmpirical(t={self.interpolated.t}, alpha={self.alpha:.6g})"


def empirical_cdf(samples, x):
    """Step CDF ``F_t(x) = #{V <= x} / t``."""
    s = _as_sorted_samples(samples)
    return np.searchsorted(s, np.asarray(x, dtype=float), side="right") / len(s)


def interpolated_cdf(samples) -> InterpolatedEmpiricalCDF:
    return InterpolatedEmpiricalCDF(_as_sorted_samples(samples))


def dominated_cdf(samples, delta: float) -> DominatedEmpirical:
    interp = interpolated_cdf(samples)
    return DominatedEmpirical(interp, alpha(interp.t, delta))


def step_sup_distance(dist: ValueDistribution, samples) -> float:
    """``sup_x |F(x) - F_t(x)|`` for continuous ``F`` (checked at the jumps)."""
    s = _as_sorted_samples(samples)
    t = len(s)
    f = np.asarray(dist._cdf(s), dtype=float)
    ranks = np.arange(1, t + 1) / t
    gap = max(np.max(np.abs(f - ranks)), np.max(np.abs(f - (ranks - 1.0 / t))))
    # F_t is 0 on [0, V_(1)) and 1 on [V_(t), 1]
    return float(max(gap, float(dist._cdf(np.asarray(0.0))), 1.0 - float(dist._cdf(np.asarray(1.0)))))


def dkw_check(true_dist: ValueDistribution, samples, delta: float) -> bool:
    """Whether the empirical CDF is inside the DKW band around ``true_dist``."""
    s = _as_sorted_samples(samples)
    return step_sup_distance(true_dist, s) <= dkw_radius(len(s), delta)
