"""Online linear optimization learners (utility maximisation form).

Each learner exposes ``next()`` (the current iterate, no side effects) and
``update(g)`` (feed the round's gradient).  Simplex learners live on the
probability simplex of dimension K+1; ``OGAPolytope`` lives on the
quantile polytope ``{1 >= p_1 >= ... >= p_K >= 0}``.
"""

from __future__ import annotations

import math

import numpy as np

GRAD_BOUND = 1.0 + 1e-9


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    x = np.maximum(v - theta, 0.0)
    return x / x.sum()


def pool_adjacent_violators(y) -> np.ndarray:
    """Least-squares non-increasing fit to ``y``."""
    y = np.asarray(y, dtype=float)
    means, sizes = [], []
    for val in y:
        means.append(val)
        sizes.append(1)
        # a later block may not exceed the one before it
        while len(means) > 1 and means[-1] > means[-2]:
            m2, n2 = means.pop(), sizes.pop()
            m1, n1 = means[-1], sizes[-1]
            means[-1] = (m1 * n1 + m2 * n2) / (n1 + n2)
            sizes[-1] = n1 + n2
    return np.repeat(means, sizes)


def project_polytope(v) -> np.ndarray:
    """Euclidean projection onto ``{1 >= p_1 >= ... >= p_K >= 0}``.

    Clamping commutes with the isotonic fit, so PAV followed by a clip is exact.
    """
    return np.clip(pool_adjacent_violators(v), 0.0, 1.0)


class Learner:
    kind = "base"

    def __init__(self, dim: int, eta_scale: float = 1.0):
        if dim < 2 and self.kind != "oga-polytope":
            raise ValueError("simplex learners need dimension >= 2")
        self.dim = dim
        self.eta_scale = eta_scale
        self.t = 0

    def eta(self, t: int) -> float:
        raise NotImplementedError

    def next(self) -> np.ndarray:
        return self._x.copy()

    def _check(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if g.shape != (self.dim,):
            raise ValueError(f"gradient has shape {g.shape}, expected ({self.dim},)")
        if not np.all(np.abs(g) <= GRAD_BOUND):
            raise ValueError(f"gradient sup-norm {np.max(np.abs(g))} exceeds 1")
        return g

    def update(self, g) -> "Learner":
        g = self._check(g)
        self.t += 1
        self._step(g, self.eta_scale * self.eta(self.t))
        return self


class MWU(Learner):
    """Multiplicative weights: ``x_i <- x_i exp(eta_t g_i)``, renormalised, in log space."""

    kind = "mwu"

    def __init__(self, dim: int, eta_scale: float = 1.0):
        super().__init__(dim, eta_scale)
        self._logw = np.zeros(dim)
        self._x = np.full(dim, 1.0 / dim)

    def eta(self, t):
        return math.sqrt(math.log(self.dim) / t)

    def _step(self, g, eta):
        lw = self._logw + eta * g
        lw -= lw.max()
        self._logw = lw
        w = np.exp(lw)
        self._x = w / w.sum()


class FTRLEntropy(Learner):
    """FTRL with negative entropy: ``x ∝ exp(eta_t * sum of gradients)``."""

    kind = "ftrl-entropy"

    def __init__(self, dim: int, eta_scale: float = 1.0):
        super().__init__(dim, eta_scale)
        self.grad_sum = np.zeros(dim)
        self._x = np.full(dim, 1.0 / dim)

    def eta(self, t):
        return math.sqrt(math.log(self.dim) / t)

    def _step(self, g, _eta):
        self.grad_sum += g
        # the iterate for round t+1 uses eta_{t+1}
        z = self.eta_scale * self.eta(self.t + 1) * self.grad_sum
        w = np.exp(z - z.max())
        self._x = w / w.sum()


class OGASimplex(Learner):
    """Projected online gradient ascent over the simplex, ``eta_t = sqrt(2/t)``."""

    kind = "oga-simplex"

    def __init__(self, dim: int, eta_scale: float = 1.0):
        super().__init__(dim, eta_scale)
        self._x = np.full(dim, 1.0 / dim)

    def eta(self, t):
        return math.sqrt(2.0 / t)

    def _step(self, g, eta):
        self._x = project_simplex(self._x + eta * g)


class OGAPolytope(Learner):
    """Projected gradient ascent over the quantile polytope from ``p = 0``, ``eta_t = 1/sqrt(t)``."""

    kind = "oga-polytope"

    def __init__(self, dim: int, eta_scale: float = 1.0):
        super().__init__(dim, eta_scale)
        self._x = np.zeros(dim)

    def eta(self, t):
        return 1.0 / math.sqrt(t)

    def _step(self, g, eta):
        self._x = project_polytope(self._x + eta * g)


LEARNERS = {cls.kind: cls for cls in (MWU, FTRLEntropy, OGASimplex, OGAPolytope)}


def make_learner(kind: str, K: int, eta_scale: float = 1.0) -> Learner:
    """Learner for a grid with K positive bids."""
    try:
        cls = LEARNERS[kind]
    except KeyError:
        raise ValueError(f"unknown learner {kind!r}; choose from {sorted(LEARNERS)}") from None
    dim = K if cls is OGAPolytope else K + 1
    return cls(dim, eta_scale)
