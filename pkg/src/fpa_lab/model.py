"""Bid grid, value distributions on [0, 1] and the single-shot optimal revenue.

Every distribution exposes the same small surface: ``cdf``, ``quantile`` (the
generalized inverse ``inf{v : F(v) >= y}``), ``quantile_integral``,
``partial_mean`` and ``sample``.  Piecewise-linear CDFs are handled exactly;
analytic ones either supply closed forms or fall back to root finding and
adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate

QUAD_TOL = 1e-10
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DomainError(ValueError):
    """Argument outside the model's domain (values and probabilities live in [0, 1])."""


class ConstructionError(ValueError):
    """Invalid data handed to a distribution or grid constructor."""


def _check_unit(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {x!r}")
    return arr


def _check_interval(a, b):
    _check_unit(a, "a")
    _check_unit(b, "b")
    if a > b:
        raise DomainError(f"empty interval: a={a} > b={b}")


@dataclass(frozen=True)
class BidGrid:
    """The K+1 bids ``b_i = i * eps``."""

    K: int
    eps: float

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ConstructionError(f"K must be a positive integer, got {self.K}")
        if not (0.0 < self.eps and self.K * self.eps <= 1.0 + 1e-12):
            raise ConstructionError(f"need 0 < eps <= 1/K, got K={self.K}, eps={self.eps}")

    @classmethod
    def uniform(cls, K: int) -> "BidGrid":
        return cls(K, 1.0 / K)

    @property
    def size(self) -> int:
        return self.K + 1

    def bid(self, i: int) -> float:
        if not 0 <= i <= self.K:
            raise IndexError(f"bid index {i} outside 0..{self.K}")
        return i * self.eps

    @cached_property
    def bids(self) -> np.ndarray:
        b = np.arange(self.K + 1) * self.eps
        b.setflags(write=False)
        return b

    def index_of(self, price: float, tol: float = 1e-12) -> int:
        """Index of the bid equal to ``price``; raises if the grid lacks it."""
        i = int(round(price / self.eps))
        if 0 <= i <= self.K and abs(i * self.eps - price) <= tol:
            return i
        raise ConstructionError(f"price {price} is not on the grid (K={self.K}, eps={self.eps})")

    def floor_index(self, price: float) -> int:
        """Largest index whose bid does not exceed ``price``."""
        return int(min(self.K, max(0, math.floor(price / self.eps + 1e-12))))


@dataclass(frozen=True)
class CompetingBidDist:
    """Distribution ``d`` of the highest competing bid over grid indices."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConstructionError("competing-bid weights must be a probability vector")
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, index: int, size: int) -> "CompetingBidDist":
        w = np.zeros(size)
        w[index] = 1.0
        return cls(w)

    def __len__(self):
        return len(self.weights)


class ValueDistribution:
    """Base class for CDFs on [0, 1].

    Subclasses implement the vectorised ``_cdf`` and ``_quantile``; the public
    methods validate arguments.  ``kind`` is one of ``analytic``,
    ``piecewise-linear`` or ``dominated-empirical``.
    """

    kind = "analytic"
    # Points where the CDF or its density changes formula; used by Myerson,
    # sup-distance and quadrature.
    breakpoints: tuple = ()

    def cdf(self, x):
        arr = _check_unit(x)
        out = self._cdf(arr)
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, y):
        arr = _check_unit(y, "y")
        out = self._quantile(arr)
        return float(out) if np.ndim(out) == 0 else out

    def quantile_integral(self, a: float, b: float) -> float:
        """Integral of the generalized inverse over ``[a, b]``."""
        _check_interval(a, b)
        if a == b:
            return 0.0
        return self._quantile_integral(float(a), float(b))

    def partial_mean(self, a: float, b: float) -> float:
        """``E[v * 1(a < v <= b)]``."""
        _check_interval(a, b)
        if a == b:
            return 0.0
        return self._partial_mean(float(a), float(b))

    @property
    def mean(self) -> float:
        return self.quantile_integral(0.0, 1.0)

    def sample(self, rng: np.random.Generator, size=None):
        return self._quantile(rng.random(size))

    # generic fallbacks -------------------------------------------------

    def _quantile(self, y):
        y = np.asarray(y, dtype=float)
        out = np.array([self._bisect_quantile(float(v)) for v in y.ravel()]).reshape(y.shape)
        return out if out.ndim else out[()]

    def _bisect_quantile(self, y: float) -> float:
        if y <= float(self._cdf(np.asarray(0.0))):
            return 0.0
        lo, hi = 0.0, 1.0
        # invariant: F(lo) < y <= F(hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self._cdf(np.asarray(mid)) >= y:
                hi = mid
            else:
                lo = mid
        return hi

    def _quantile_integral(self, a, b):
        pts = sorted({float(self._cdf(np.asarray(p))) for p in self.breakpoints} - {a, b})
        pts = [p for p in pts if a < p < b]
        val, _ = integrate.quad(lambda u: self._quantile(u), a, b, points=pts or None,
                                epsabs=QUAD_TOL, epsrel=1e-12, limit=500)
        return val

    def _partial_mean(self, a, b):
        # E[v 1(a<v<=b)] = b F(b) - a F(a) - int_a^b F
        pts = [p for p in self.breakpoints if a < p < b]
        area, _ = integrate.quad(lambda x: self._cdf(np.asarray(x)), a, b, points=pts or None,
                                 epsabs=QUAD_TOL, epsrel=1e-12, limit=500)
        return b * float(self._cdf(np.asarray(b))) - a * float(self._cdf(np.asarray(a))) - area


class AnalyticDistribution(ValueDistribution):
    """A CDF given by a closure, with optional closed forms for the rest.

    Without closed forms, ``quantile`` bisects and ``quantile_integral`` uses
    adaptive quadrature at absolute tolerance 1e-10.
    """

    kind = "analytic"

    def __init__(self, cdf: Callable, *, density: Optional[Callable] = None,
                 quantile: Optional[Callable] = None,
                 quantile_integral: Optional[Callable] = None,
                 partial_mean: Optional[Callable] = None,
                 breakpoints=(), name: str = "analytic", check: bool = True):
        self._cdf_fn = cdf
        self.density = density
        self._q_fn = quantile
        self._qi_fn = quantile_integral
        self._pm_fn = partial_mean
        self.breakpoints = tuple(sorted(float(b) for b in breakpoints))
        self.name = name
        if check:
            self._validate()

    def _validate(self):
        xs = np.linspace(0.0, 1.0, 2001)
        ys = np.asarray(self._cdf_fn(xs), dtype=float)
        if np.any(np.diff(ys) < -1e-12):
            raise ConstructionError(f"{self.name}: CDF is not non-decreasing")
        if abs(ys[-1] - 1.0) > 1e-12:
            raise ConstructionError(f"{self.name}: CDF(1) must be 1")
        if abs(ys[0]) > 1e-12:
            raise ConstructionError(f"{self.name}: analytic CDFs must satisfy F(0) = 0")

    def _cdf(self, x):
        return self._cdf_fn(x)

    def _quantile(self, y):
        if self._q_fn is not None:
            return self._q_fn(y)
        return super()._quantile(y)

    def _quantile_integral(self, a, b):
        if self._qi_fn is not None:
            return self._qi_fn(a, b)
        return super()._quantile_integral(a, b)

    def _partial_mean(self, a, b):
        if self._pm_fn is not None:
            return self._pm_fn(a, b)
        return super()._partial_mean(a, b)

    def __repr__(self):
        return f"AnalyticDistribution({self.name})"


def uniform() -> AnalyticDistribution:
    return AnalyticDistribution(
        lambda x: np.clip(x, 0.0, 1.0),
        density=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        quantile=lambda y: y,
        quantile_integral=lambda a, b: 0.5 * (b * b - a * a),
        partial_mean=lambda a, b: 0.5 * (b * b - a * a),
        name="uniform",
    )


def equirevenue(a: float, c: float = 0.75) -> AnalyticDistribution:
    """Equal-revenue distribution starting at ``a``, smoothly truncated at ``c``.

    ``F(x) = 1 - a/x`` on ``(a, c)`` and linear up to ``F(1) = 1`` on ``[c, 1]``.
    ``equirevenue(1/8)`` is the negative-regret counterexample distribution.
    """
    if not 0.0 < a < c < 1.0:
        raise ConstructionError(f"equirevenue needs 0 < a < c < 1, got a={a}, c={c}")
    yc = 1.0 - a / c          # F(c)
    slope = (a / c) / (1.0 - c)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < c, 1.0 - a / np.maximum(x, a), yc + slope * (x - c))
        return out if out.ndim else out[()]

    def density(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            mid = a / np.where(x > 0, x, 1.0) ** 2
        return np.where(x <= a, 0.0, np.where(x < c, mid, slope))

    def quantile(y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            mid = a / np.where(y < 1, 1.0 - y, 1.0)
        out = np.where(y <= 0, 0.0, np.where(y <= yc, mid, c + (y - yc) / slope))
        return out if out.ndim else out[()]

    def prim_q(u):
        # antiderivative of F^- from 0
        if u <= yc:
            return -a * math.log1p(-u)
        d = u - yc
        return -a * math.log(a / c) + c * d + 0.5 * d * d / slope

    def prim_pm(x):
        # E[v 1(v <= x)]
        if x <= a:
            return 0.0
        if x <= c:
            return a * math.log(x / a)
        return a * math.log(c / a) + 0.5 * slope * (x * x - c * c)

    return AnalyticDistribution(
        cdf, density=density, quantile=quantile,
        quantile_integral=lambda lo, hi: prim_q(hi) - prim_q(lo),
        partial_mean=lambda lo, hi: prim_pm(hi) - prim_pm(lo),
        breakpoints=(a, c), name=f"equirevenue({a:g},{c:g})",
    )


def example1() -> AnalyticDistribution:
    """Truncated equal-revenue distribution from 1/8 with Myerson revenue 1/8."""
    d = equirevenue(0.125, 0.75)
    d.name = "example1"
    return d


class PiecewiseLinearCDF(ValueDistribution):
    """CDF linear between knots ``(xs[k], ys[k])`` with ``xs[0] = 0``, ``xs[-1] = 1``.

    ``ys[0] > 0`` encodes an atom at zero and is only allowed when
    ``allow_atom`` is set (the dominated empirical estimate).
    """

    kind = "piecewise-linear"

    def __init__(self, xs, ys, *, allow_atom: bool = False, check: bool = True):
        xs = np.array(xs, dtype=float)
        ys = np.array(ys, dtype=float)
        if check:
            if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 2:
                raise ConstructionError("knots must be two 1-d arrays of equal length >= 2")
            if xs[0] != 0.0 or xs[-1] != 1.0:
                raise ConstructionError("first knot must be at 0 and last at 1")
            if np.any(np.diff(xs) <= 0):
                raise ConstructionError("knot x-coordinates must be strictly increasing")
            if np.any(np.diff(ys) < 0) or np.any(ys < 0) or np.any(ys > 1):
                raise ConstructionError("CDF values must be non-decreasing in [0, 1]")
            if ys[-1] != 1.0:
                raise ConstructionError("CDF must reach 1 at x = 1")
            if ys[0] != 0.0 and not allow_atom:
                raise ConstructionError("F(0) must be 0 (no atom at zero)")
        if ys[0] > 0:
            self.kind = "dominated-empirical"
        xs.setflags(write=False)
        ys.setflags(write=False)
        self.xs, self.ys = xs, ys
        self.breakpoints = tuple(xs[1:-1])

    @property
    def atom(self) -> float:
        return float(self.ys[0])

    def _cdf(self, x):
        return np.interp(x, self.xs, self.ys)

    def _quantile(self, y):
        xs, ys = self.xs, self.ys
        k = np.searchsorted(ys, y, side="left")
        k1 = np.clip(k, 1, len(xs) - 1)
        x0, x1 = xs[k1 - 1], xs[k1]
        y0, y1 = ys[k1 - 1], ys[k1]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(y1 > y0, (y - y0) / (y1 - y0), 1.0)
        out = np.where(k == 0, xs[0], x0 + np.clip(t, 0.0, 1.0) * (x1 - x0))
        return out if np.ndim(out) else out[()]

    @cached_property
    def _qi_cum(self):
        # integral of F^- from 0 up to each knot level ys[k]
        xs, ys = self.xs, self.ys
        return np.concatenate([[0.0], np.cumsum(0.5 * (xs[:-1] + xs[1:]) * np.diff(ys))])

    @cached_property
    def _cdf_cum(self):
        xs, ys = self.xs, self.ys
        return np.concatenate([[0.0], np.cumsum(0.5 * (ys[:-1] + ys[1:]) * np.diff(xs))])

    def _qi_prim(self, u: float) -> float:
        ys = self.ys
        if u <= ys[0]:
            return 0.0
        k = int(np.searchsorted(ys, u, side="left"))
        x = float(self._quantile(np.asarray(u)))
        return float(self._qi_cum[k - 1] + 0.5 * (u - ys[k - 1]) * (self.xs[k - 1] + x))

    def _quantile_integral(self, a, b):
        return self._qi_prim(b) - self._qi_prim(a)

    def _cdf_prim(self, x: float) -> float:
        xs = self.xs
        k = int(np.clip(np.searchsorted(xs, x, side="right"), 1, len(xs) - 1))
        fx = float(np.interp(x, xs, self.ys))
        return float(self._cdf_cum[k - 1] + 0.5 * (x - xs[k - 1]) * (self.ys[k - 1] + fx))

    def _partial_mean(self, a, b):
        fa, fb = float(self._cdf(a)), float(self._cdf(b))
        return b * fb - a * fa - (self._cdf_prim(b) - self._cdf_prim(a))

    def __repr__(self):
        return f"PiecewiseLinearCDF({len(self.xs)} knots, atom={self.atom:g})"


def as_piecewise(dist: ValueDistribution) -> Optional[PiecewiseLinearCDF]:
    """The exact piecewise-linear form of ``dist`` when it has one."""
    if isinstance(dist, PiecewiseLinearCDF):
        return dist
    to_pl = getattr(dist, "to_piecewise", None)
    return to_pl() if to_pl is not None else None


def sample(dist: ValueDistribution, rng: np.random.Generator, size=None):
    """Inverse-transform sample ``quantile(U)``."""
    return dist.sample(rng, size)


def sup_distance(a: ValueDistribution, b: ValueDistribution, grid_points: int = 10_001) -> float:
    """``max_x |F_a(x) - F_b(x)|`` over [0, 1]."""
    pa, pb = as_piecewise(a), as_piecewise(b)
    if pa is not None and pb is not None:
        xs = np.union1d(pa.xs, pb.xs)
    else:
        xs = np.union1d(np.linspace(0.0, 1.0, grid_points),
                        np.array(a.breakpoints + b.breakpoints, dtype=float))
    return float(np.max(np.abs(a._cdf(xs) - b._cdf(xs))))


def _revenue_curve(dist, r):
    return r * (1.0 - dist._cdf(r))


def myerson_revenue(dist: ValueDistribution, resolution: int = 100_000) -> float:
    """``max_r r (1 - F(r))``, the optimal posted-price revenue."""
    if resolution < 2:
        raise DomainError("resolution must be >= 2")
    pl = as_piecewise(dist)
    if pl is not None:
        return _myerson_piecewise(pl)
    rs = np.union1d(np.linspace(0.0, 1.0, resolution), np.array(dist.breakpoints, dtype=float))
    vals = _revenue_curve(dist, rs)
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo, hi = float(rs[max(k - 1, 0)]), float(rs[min(k + 1, len(rs) - 1)])
    return max(best, _golden_max(lambda r: float(_revenue_curve(dist, np.asarray(r))), lo, hi))


def _golden_max(f, lo: float, hi: float, tol: float = 1e-13) -> float:
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    best = max(fc, fd)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = f(d)
        best = max(best, fc, fd)
    return best


def _myerson_piecewise(pl: PiecewiseLinearCDF) -> float:
    xs, ys = pl.xs, pl.ys
    cands = [xs]
    dx, dy = np.diff(xs), np.diff(ys)
    s = dy / dx
    inc = s > 0
    # stationary point of r (1 - y0 - s (r - x0)) on each increasing piece
    r = (1.0 - ys[:-1][inc] + s[inc] * xs[:-1][inc]) / (2.0 * s[inc])
    ok = (r > xs[:-1][inc]) & (r < xs[1:][inc])
    cands.append(r[ok])
    rs = np.concatenate(cands)
    return float(np.max(rs * (1.0 - pl._cdf(rs))))


# plcdf v1 text format -------------------------------------------------

def dump_plcdf(dist: PiecewiseLinearCDF) -> str:
    lines = []
    if dist.atom > 0:
        lines.append(f"atom0 {float(dist.atom)!r}")
    lines.append("plcdf v1")
    lines += [f"{float(x)!r}\t{float(y)!r}" for x, y in zip(dist.xs, dist.ys)]
    return "\n".join(lines) + "\n"


def parse_plcdf(text: str, source: str = "<plcdf>") -> PiecewiseLinearCDF:
    lines = [ln for ln in text.splitlines()]
    atom = None
    pos = 0
    if lines and lines[0].startswith("atom0"):
        try:
            atom = float(lines[0].split()[1])
        except (IndexError, ValueError):
            raise ConstructionError(f"{source}:1: malformed atom0 line")
        pos = 1
    if pos >= len(lines) or lines[pos].strip() != "plcdf v1":
        raise ConstructionError(f"{source}:{pos + 1}: expected header 'plcdf v1'")
    xs, ys = [], []
    for lineno, ln in enumerate(lines[pos + 1:], start=pos + 2):
        if not ln.strip():
            continue
        parts = ln.split("\t")
        if len(parts) != 2:
            raise ConstructionError(f"{source}:{lineno}: expected 'x<TAB>F(x)'")
        try:
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
        except ValueError:
            raise ConstructionError(f"{source}:{lineno}: non-numeric entry")
    if atom is not None and ys and ys[0] != atom:
        raise ConstructionError(f"{source}: atom0 {atom} disagrees with F(0) = {ys[0]}")
    return PiecewiseLinearCDF(xs, ys, allow_atom=atom is not None)


def load_plcdf(path) -> PiecewiseLinearCDF:
    path = Path(path)
    return parse_plcdf(path.read_text(), str(path))


def save_plcdf(dist: PiecewiseLinearCDF, path) -> None:
    Path(path).write_text(dump_plcdf(dist))
