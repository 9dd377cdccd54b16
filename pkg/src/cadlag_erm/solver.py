"""Empirical risk minimization over a variation-norm ball.

Through the knot basis the problem becomes minimization of the average
loss over (intercept, coefficients) with sum of absolute values bounded
by the sieve radius.  It is solved by a monotone accelerated projected
gradient method (MFISTA) with backtracking and adaptive restart.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .basis import DesignOperator, FittedFunction, KnotBasis, fit_svn, generate_basis
from .errors import EmptyData, NonFinite
from .losses import LossSpec

log = logging.getLogger(__name__)

SCHEDULES = ("constant", "power")


@dataclass(frozen=True)
class SieveSchedule:
    kind: str = "constant"
    A: float = 1.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.kind!r}")
        if not self.A > 0:
            raise ValueError("A must be positive")
        if self.kind == "power" and not self.p > 0:
            raise ValueError("power schedule needs p > 0")
        if self.p < 0:
            raise ValueError("p must be nonnegative")


def sieve_radius(schedule: SieveSchedule, n: int) -> float:
    if n < 1:
        raise ValueError("n must be at least 1")
    if schedule.kind == "constant":
        return float(schedule.A)
    return float(schedule.A * n ** schedule.p)


@dataclass(frozen=True)
class StepRule:
    initial_step: float = 1.0  # multiplier on the power-iteration smoothness estimate
    shrink: float = 0.5
    sufficient_decrease: float = 1.0

    def __post_init__(self):
        if not (self.initial_step > 0 and 0 < self.shrink < 1 and self.sufficient_decrease > 0):
            raise ValueError("invalid backtracking parameters")


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 50_000
    grad_tol: float = 1e-7
    objective_tol: float = 1e-10
    step_rule: StepRule = field(default_factory=StepRule)
    # consecutive small decreases before stopping on objective_tol
    patience: int = 20
    record_history: bool = False

    def __post_init__(self):
        if not (self.max_iters > 0 and self.grad_tol > 0 and self.objective_tol > 0 and self.patience > 0):
            raise ValueError("solver options must be positive")


@dataclass(frozen=True, eq=False)
class SolveReport:
    fit: FittedFunction
    iterations: int
    final_objective: float
    kkt_residual: float
    active_set_size: int
    status: str  # converged | objective_tol | max_iters
    radius: float = 0.0
    runtime: float = 0.0
    history: tuple = ()

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto {w : sum |w_j| <= radius} (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    if radius == 0:
        return np.zeros_like(v)
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - radius
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.sign(v) * np.maximum(a - tau, 0.0)


class _Problem:
    def __init__(self, op: DesignOperator, y: np.ndarray, loss: LossSpec):
        self.op = op
        self.y = y
        self.loss = loss
        self.n = y.shape[0]

    def value(self, w):
        u = self.op.matvec(w)
        return float(np.mean(self.loss.value(u, self.y))), u

    def grad_from_u(self, u):
        return self.op.rmatvec(self.loss.subgradient_u(u, self.y)) / self.n


def _kkt(w, g, radius, tol=1e-9):
    l1 = float(np.abs(w).sum())
    gmax = float(np.max(np.abs(g))) if g.size else 0.0
    if l1 < radius - tol * max(1.0, radius):
        return gmax
    active = w != 0
    if not np.any(active):
        return gmax
    # -g must lie in lambda * subdifferential of the l1 norm, with lambda = max |g|
    return float(np.max(np.abs(g[active] + gmax * np.sign(w[active]))))


def _check_data(X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise EmptyData("no observations")
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y lengths differ")
    if not np.all(np.isfinite(Y)):
        raise NonFinite("responses must be finite")
    return X, Y


def kkt_residual(fit: FittedFunction, data, loss: LossSpec, radius: float) -> float:
    X, Y = _check_data(*data)
    prob = _Problem(fit.basis.design(X), Y, loss)
    w = fit.vector()
    _, u = prob.value(w)
    return _kkt(w, prob.grad_from_u(u), radius)


def _lipschitz_guess(prob: _Problem, rng_seed=0) -> float:
    """Power-iteration estimate of the smoothness of the average loss."""
    rng = np.random.default_rng(rng_seed)
    v = rng.normal(size=prob.op.shape[1])
    v /= np.linalg.norm(v)
    s = 1.0
    for _ in range(15):
        z = prob.op.rmatvec(prob.op.matvec(v))
        s = float(np.linalg.norm(z))
        if s == 0:
            return 1.0
        v = z / s
    curvature = 2.0 if prob.loss.is_square else 0.25
    return max(curvature * s / prob.n, 1e-12)


def fit_erm(data, loss: LossSpec, radius: float, opts: SolveOptions | None = None,
            basis: KnotBasis | None = None, warm_start=None) -> SolveReport:
    """Empirical risk minimizer over the variation-norm ball of the given radius."""
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    X, Y = _check_data(*data)
    if radius < 0 or not math.isfinite(radius):
        raise ValueError("radius must be finite and nonnegative")
    basis = basis or generate_basis(X)
    op = basis.design(X)
    prob = _Problem(op, Y, loss)
    p = op.shape[1]

    if warm_start is not None:
        x = project_l1_ball(np.asarray(warm_start, dtype=float), radius)
    else:
        x = np.zeros(p)
    fx, ux = prob.value(x)
    if not math.isfinite(fx):
        raise NonFinite("objective is not finite at the starting point")
    history = [fx] if opts.record_history else None
    if radius == 0:
        fit = FittedFunction.from_vector(x, basis)
        g = prob.grad_from_u(ux)
        return SolveReport(fit, 0, fx, _kkt(x, g, radius), 0, "converged", radius,
                           time.perf_counter() - t0, tuple(history or ()))

    L = _lipschitz_guess(prob) * opts.step_rule.initial_step
    shrink = opts.step_rule.shrink
    c = opts.step_rule.sufficient_decrease
    y, fy, uy = x, fx, ux
    t = 1.0
    status = "max_iters"
    small = 0
    it = 0
    for it in range(1, opts.max_iters + 1):
        gy = prob.grad_from_u(uy)
        while True:
            z = project_l1_ball(y - gy / L, radius)
            fz, uz = prob.value(z)
            if not math.isfinite(fz):
                raise NonFinite("objective became non-finite")
            dz = z - y
            if fz <= fy + float(gy @ dz) + 0.5 * c * L * float(dz @ dz) + 1e-15 * abs(fy):
                break
            L /= shrink
        gmap = L * float(np.max(np.abs(dz))) if dz.size else 0.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if fz <= fx:
            decrease = fx - fz
            x_new, f_new, u_new = z, fz, uz
            y = x_new + ((t - 1.0) / t_next) * (x_new - x)
            t = t_next
        else:
            # restart momentum, keep the best point
            decrease = 0.0
            x_new, f_new, u_new = x, fx, ux
            y = x_new + (t / t_next) * (z - x_new)
            t = 1.0
        x, fx, ux = x_new, f_new, u_new
        if history is not None:
            history.append(fx)
        if y is x:
            fy, uy = fx, ux
        else:
            fy, uy = prob.value(y)
            if not math.isfinite(fy):
                y, fy, uy, t = x, fx, ux, 1.0
        # let the step grow a little so one bad backtrack does not persist
        L *= 0.95
        if gmap <= opts.grad_tol:
            status = "converged"
            break
        if decrease <= opts.objective_tol * abs(fx):
            small += 1
            if small >= opts.patience:
                status = "objective_tol"
                break
        else:
            small = 0
    g = prob.grad_from_u(ux)
    kkt = _kkt(x, g, radius)
    fit = FittedFunction.from_vector(x, basis)
    assert fit_svn(fit) <= radius * (1 + 1e-12) + 1e-9
    return SolveReport(fit, it, fx, kkt, int(np.count_nonzero(x)), status, radius,
                       time.perf_counter() - t0, tuple(history or ()))
