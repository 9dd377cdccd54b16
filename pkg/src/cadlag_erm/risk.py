"""Designs on the unit cube and the population risk oracle.

For piecewise-constant functions the population risk under a product
design is a finite sum over the cells of the union grid, so it is computed
exactly.  Monte Carlo is available for anything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import expit

from .basis import FittedFunction
from .losses import LossSpec
from .svn import GridFunction

DESIGNS = ("uniform", "product-beta")


@dataclass(frozen=True)
class Design:
    """Product distribution of X on [0,1]^d: uniform or i.i.d. Beta(a, b) coordinates."""

    kind: str = "uniform"
    dim: int = 1
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in DESIGNS:
            raise ValueError(f"unknown design {self.kind!r}; choose from {DESIGNS}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.kind == "product-beta" and not (self.a > 0 and self.b > 0):
            raise ValueError("beta parameters must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(size=(n, self.dim))
        return rng.beta(self.a, self.b, size=(n, self.dim))

    def axis_cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        if self.kind == "uniform":
            return t
        return stats.beta.cdf(t, self.a, self.b)

    def cell_probabilities(self, axis_grid) -> np.ndarray:
        """P(X_j in [g_k, g_{k+1})) with the last cell closed at 1."""
        edges = np.append(np.asarray(axis_grid, dtype=float), 1.0)
        return np.diff(self.axis_cdf(edges))


@dataclass(frozen=True)
class RiskSettings:
    method: str = "exact"  # exact | mc
    n_mc: int = 1_000_000
    seed: int = 0
    noise_var: float = 0.0  # Var(Y | X) for square losses
    chunk: int = 1 << 20


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    std_error: float
    n_mc: int
    method: str


def breakpoints(f) -> tuple[np.ndarray, ...]:
    if isinstance(f, GridFunction):
        return f.grid
    if isinstance(f, FittedFunction):
        return f.basis.knot_grid()
    raise TypeError(f"no known breakpoints for {type(f).__name__}; use method='mc'")


def _evaluate(f, pts):
    if isinstance(f, FittedFunction):
        return f.predict(pts)
    return np.asarray(f(pts), dtype=float)


def conditional_risk(loss: LossSpec, u, m, noise_var: float = 0.0):
    """E[L(u, Y) | X] when the regression function at X equals ``m``."""
    u = np.asarray(u, dtype=float)
    m = np.asarray(m, dtype=float)
    if loss.family == "logistic":
        eta = expit(m)
        return eta * np.logaddexp(0.0, -u) + (1.0 - eta) * np.logaddexp(0.0, u)
    return (u - m) ** 2 + noise_var


def _cell_sum(integrand, fns, design: Design, chunk: int) -> float:
    """Exact sum of integrand(values...) * P(cell) over the union grid."""
    d = design.dim
    grids = [np.unique(np.concatenate([breakpoints(f)[j] for f in fns])) for j in range(d)]
    probs = [design.cell_probabilities(g) for g in grids]
    rest = grids[1:]
    if rest:
        mesh = np.meshgrid(*rest, indexing="ij")
        tail = np.column_stack([m.ravel() for m in mesh])
        tail_p = probs[1]
        for p in probs[2:]:
            tail_p = np.multiply.outer(tail_p, p)
        tail_p = tail_p.ravel()
    else:
        tail = np.zeros((1, 0))
        tail_p = np.ones(1)
    rows = max(1, chunk // len(tail))
    total = 0.0
    g0, p0 = grids[0], probs[0]
    for start in range(0, len(g0), rows):
        head = g0[start:start + rows]
        pts = np.column_stack([np.repeat(head, len(tail)), np.tile(tail, (len(head), 1))])
        w = np.multiply.outer(p0[start:start + rows], tail_p).ravel()
        vals = [_evaluate(f, pts) for f in fns]
        total += float(np.dot(w, integrand(*vals)))
    return total


def risk_oracle(loss: LossSpec, theta, theta0, design: Design, settings: RiskSettings | None = None) -> RiskEstimate:
    """Population risk P0 L(theta) when the regression function is ``theta0``."""
    settings = settings or RiskSettings()
    if settings.method == "exact":
        value = _cell_sum(
            lambda u, m: conditional_risk(loss, u, m, settings.noise_var),
            (theta, theta0), design, settings.chunk,
        )
        return RiskEstimate(value, 0.0, 0, "exact")
    if settings.method != "mc":
        raise ValueError(f"unknown risk method {settings.method!r}")
    rng = np.random.default_rng(settings.seed)
    s1 = s2 = 0.0
    done = 0
    while done < settings.n_mc:
        m = min(settings.chunk, settings.n_mc - done)
        X = design.sample(rng, m)
        c = conditional_risk(loss, _evaluate(theta, X), _evaluate(theta0, X), settings.noise_var)
        s1 += float(c.sum())
        s2 += float((c * c).sum())
        done += m
    mean = s1 / done
    var = max(s2 / done - mean * mean, 0.0)
    return RiskEstimate(mean, math.sqrt(var / done), done, "mc")


def l2_distance(theta, theta0, design: Design, chunk: int = 1 << 20) -> float:
    """Exact ||theta - theta0||_{P0,2} for piecewise-constant functions."""
    sq = _cell_sum(lambda a, b: (a - b) ** 2, (theta, theta0), design, chunk)
    return math.sqrt(max(sq, 0.0))


def make_risk_oracle(loss: LossSpec, theta0, design: Design, settings: RiskSettings | None = None):
    """Single-argument oracle for :func:`losses.dissimilarity`."""
    def oracle(theta):
        return risk_oracle(loss, theta, theta0, design, settings)
    return oracle
