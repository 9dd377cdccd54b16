"""Bernstein norms, sub-exponential noise certificates and audits of the
norm bounds used for unbounded (sub-exponential) regression noise."""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, stats

from .errors import AuditViolation, BernsteinOverflow, CertificationFailure, UnknownFamily
from .risk import Design, l2_distance
from .svn import GridFunction, random_mixture, synthesize, union_grid

NOISE_FAMILIES = ("laplace", "gaussian", "centered_exponential")
OVERFLOW_LIMIT = 700.0
PRIME_FACTOR = 1.5  # alpha' = 1.5 * alpha keeps E exp(|e| / alpha') finite for all families
SAFETY = 1.01  # multiplicative margin on numerically derived nu


def phi(x):
    """exp(x) - x - 1 with a series branch near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    out = np.where(small, x * x / 2 + x ** 3 / 6 + x ** 4 / 24, np.expm1(np.where(small, 0.0, x)) - x)
    return float(out) if out.ndim == 0 else out


def bernstein_norm(g_samples, t: float) -> float:
    """sqrt(t^-2 * mean(phi(t g))) for samples of g."""
    if not t > 0:
        raise ValueError("t must be positive")
    g = np.asarray(g_samples, dtype=float).ravel()
    if not np.all(np.isfinite(g)):
        raise ValueError("samples must be finite")
    if g.size == 0:
        return 0.0
    if np.max(np.abs(t * g)) > OVERFLOW_LIMIT:
        raise BernsteinOverflow(f"|t g| reaches {np.max(np.abs(t * g)):.4g}; t is too large for this data")
    return math.sqrt(max(float(np.mean(phi(t * g))), 0.0)) / t


def bernstein_norm_se(g_samples, t: float) -> tuple[float, float]:
    """Norm estimate and its delta-method standard error."""
    g = np.asarray(g_samples, dtype=float).ravel()
    norm = bernstein_norm(g, t)
    vals = phi(t * g) / t ** 2
    se_sq = float(np.std(vals)) / math.sqrt(g.size)
    se = se_sq / (2 * norm) if norm > 0 else math.sqrt(se_sq)
    return norm, se


# ---------------------------------------------------------------------------
# noise models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubExpParams:
    alpha: float
    nu: float
    alpha_prime: float
    nu_prime: float

    def c_tilde(self) -> float:
        """Constant multiplying a_n in the Bernstein-norm bound."""
        return 2.0 * self.alpha_prime * math.exp(self.nu_prime ** 2 / (2.0 * self.alpha_prime ** 2))


def _distribution(family: str, scale: float):
    if family == "laplace":
        return stats.laplace(scale=scale)
    if family == "gaussian":
        return stats.norm(scale=scale)
    if family == "centered_exponential":
        return stats.expon(loc=-scale, scale=scale)
    raise UnknownFamily(f"unknown noise family {family!r}; choose from {NOISE_FAMILIES}")


def _draw(family: str, scale: float, rng: np.random.Generator, n: int) -> np.ndarray:
    if family == "laplace":
        return rng.laplace(0.0, scale, size=n)
    if family == "gaussian":
        return rng.normal(0.0, scale, size=n)
    return rng.exponential(scale, size=n) - scale


def _sampler(family: str, scale: float) -> Callable[[np.random.Generator, int], np.ndarray]:
    if family not in NOISE_FAMILIES:
        raise UnknownFamily(f"unknown noise family {family!r}; choose from {NOISE_FAMILIES}")
    # a partial (not a closure) so noise models pickle into worker processes
    return functools.partial(_draw, family, scale)


_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def _logpdf(dist):
    """Plain-Python log density for the frozen scipy distributions used here
    (much faster than dist.logpdf inside scalar quadrature)."""
    name = dist.dist.name
    loc, scale = dist.kwds.get("loc", 0.0), dist.kwds.get("scale", 1.0)
    if name == "norm":
        return lambda x: -0.5 * ((x - loc) / scale) ** 2 - _HALF_LOG_2PI - math.log(scale)
    if name == "laplace":
        return lambda x: -abs(x - loc) / scale - math.log(2 * scale)
    if name == "expon":
        return lambda x: -(x - loc) / scale - math.log(scale) if x >= loc else -math.inf
    return lambda x: float(dist.logpdf(x))


def _expect(dist, fn_log) -> float:
    """E exp(fn_log(e)) by quadrature on the log scale (no overflow in the tails)."""
    lo, hi = dist.support()
    logpdf = _logpdf(dist)

    def integrand(x):
        return math.exp(fn_log(x) + logpdf(x))

    parts = [(lo, 0.0), (0.0, hi)] if lo < 0 < hi else [(lo, hi)]
    total = 0.0
    for a, b in parts:
        total += integrate.quad(integrand, a, b, limit=200, epsabs=1e-13, epsrel=1e-11)[0]
    return total


def _mgf(dist, lam: float, absolute: bool = False, center: float = 0.0) -> float:
    if absolute:
        return _expect(dist, lambda x: lam * (abs(x) - center))
    return _expect(dist, lambda x: lam * x)


def _mean_abs(dist) -> float:
    lo, hi = dist.support()
    f = lambda x: abs(x) * float(dist.pdf(x))  # noqa: E731
    parts = [(lo, 0.0), (0.0, hi)] if lo < 0 < hi else [(lo, hi)]
    return sum(integrate.quad(f, a, b, limit=200)[0] for a, b in parts)


def _nu_needed(mgf, alpha: float, points: int = 200) -> float:
    """Smallest nu with mgf(lam) <= exp(nu^2 lam^2 / 2) on a fine grid of 0 < |lam| <= 1/alpha."""
    lams = np.linspace(1.0 / alpha / points, 1.0 / alpha, points)
    need = 0.0
    for lam in np.concatenate([-lams, lams]):
        need = max(need, 2.0 * math.log(mgf(lam)) / lam ** 2)
    return math.sqrt(need)


@functools.lru_cache(maxsize=None)
def _unit_constants(family: str) -> tuple[float, float, float, float]:
    """(alpha, nu, alpha', nu') at unit scale; every family is a scale family,
    so all four constants scale linearly."""
    dist = _distribution(family, 1.0)
    if family == "laplace":
        alpha, nu = math.sqrt(2.0), 2.0
    elif family == "gaussian":
        alpha, nu = 1.0, 1.0
    else:
        alpha = 2.0
        nu = SAFETY * _nu_needed(lambda lam: _mgf(dist, lam), alpha)
    ap = PRIME_FACTOR * alpha
    mean_abs = _mean_abs(dist)
    # nu' covers the centered |e| and the endpoint E exp(|e| / alpha')
    centered = _nu_needed(lambda lam: _mgf(dist, lam, absolute=True, center=mean_abs), ap)
    endpoint = math.sqrt(2.0 * ap ** 2 * math.log(_mgf(dist, 1.0 / ap, absolute=True)))
    return alpha, nu, ap, SAFETY * max(centered, endpoint)


def _alpha_nu(family: str, scale: float) -> tuple[float, float]:
    alpha, nu, _, _ = _unit_constants(family)
    return alpha * scale, nu * scale


def _primed(family: str, scale: float) -> tuple[float, float]:
    _, _, ap, nup = _unit_constants(family)
    return ap * scale, nup * scale


@dataclass(frozen=True, eq=False)
class NoiseModel:
    family: str
    scale: float
    params: SubExpParams
    sampler: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.sampler(rng, n)

    @property
    def variance(self) -> float:
        return float(_distribution(self.family, self.scale).var())


@dataclass
class CertificateCheck:
    lam: float
    mgf: float
    std_error: float
    bound: float
    target: str  # "e" or "|e|"

    @property
    def passed(self) -> bool:
        return self.mgf - 4.0 * self.std_error <= self.bound


def _mc_checks(draws: np.ndarray, alpha: float, nu: float, grid_points: int, target: str,
               center: float = 0.0) -> list[CertificateCheck]:
    out = []
    for lam in np.linspace(-1.0 / alpha, 1.0 / alpha, grid_points):
        with np.errstate(over="ignore"):
            v = np.exp(lam * (draws - center))
        mean = float(np.mean(v))
        se = float(np.std(v)) / math.sqrt(draws.size)
        out.append(CertificateCheck(float(lam), mean, se, math.exp(nu * nu * lam * lam / 2.0), target))
    return out


def certify_subexp(family: str, scale: float, n_mc: int = 1_000_000, grid_points: int = 50,
                   seed: int = 0, claimed: tuple[float, float] | None = None) -> SubExpParams:
    """Documented (alpha, nu) for the family, checked by Monte Carlo on a lambda grid.

    ``claimed`` replaces the documented (alpha, nu), e.g. to confirm that a
    wrong certificate is rejected.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    alpha, nu = claimed if claimed is not None else _alpha_nu(family, scale)
    ap, nup = _primed(family, scale)
    rng = np.random.default_rng(seed)
    draws = _sampler(family, scale)(rng, n_mc)
    checks = _mc_checks(draws, alpha, nu, grid_points, "e")
    absd = np.abs(draws)
    checks += _mc_checks(absd, ap, nup, grid_points, "|e|", center=_mean_abs(_distribution(family, scale)))
    v = np.exp(absd / ap)
    end = CertificateCheck(1.0 / ap, float(v.mean()), float(v.std()) / math.sqrt(n_mc),
                           math.exp(nup ** 2 / (2 * ap ** 2)), "|e| endpoint")
    checks.append(end)
    failures = [asdict(c) for c in checks if not c.passed]
    if failures:
        raise CertificationFailure(f"{family}({scale}) violates the claimed MGF bound at {len(failures)} grid points",
                                   failures)
    return SubExpParams(float(alpha), float(nu), float(ap), float(nup))


def make_noise(family: str, scale: float, certify: bool = True, n_mc: int = 1_000_000, seed: int = 0) -> NoiseModel:
    if certify:
        params = certify_subexp(family, scale, n_mc=n_mc, seed=seed)
    else:
        alpha, nu = _alpha_nu(family, scale)
        params = SubExpParams(alpha, nu, *_primed(family, scale))
    return NoiseModel(family, float(scale), params, _sampler(family, scale))


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

@dataclass
class BernsteinAudit:
    inequality: str
    t: float
    measured_norm: float
    bound: float
    slack: float
    constants: dict

    @property
    def passed(self) -> bool:
        return self.measured_norm <= self.bound + self.slack

    @property
    def margin(self) -> float:
        return self.bound + self.slack - self.measured_norm

    def to_dict(self) -> dict:
        return {
            "inequality": self.inequality,
            "lhs": self.measured_norm,
            "rhs": self.bound,
            "slack": self.slack,
            "pass": self.passed,
            "t": self.t,
            "constants": self.constants,
        }


def _as_grid(f) -> GridFunction:
    if isinstance(f, GridFunction):
        return f
    return f.render()


def sieve_constants(a_n: float, params: SubExpParams) -> dict:
    t_n = 1.0 / (2.0 * a_n * params.alpha_prime)
    c_tilde = params.c_tilde()
    return {"t_n": t_n, "C_n": c_tilde * a_n, "C_tilde": c_tilde}


def audit_g_classes(theta, theta_ref, theta0, a_n: float, noise: NoiseModel, n_samples: int,
                    rng: np.random.Generator, design: Design | None = None, strict: bool = False,
                    sigmas: float = 4.0) -> list[BernsteinAudit]:
    """Monte Carlo audit of the three bounds for g1 = (theta - theta_ref) e and
    g2 = (theta - theta_ref)(2 theta - theta_ref - theta0)."""
    if a_n < 0.5:
        # the Bernstein bound uses 2 a_n >= 1 to absorb the constant
        raise ValueError("the audit requires a_n >= 1/2")
    th, tr, t0 = _as_grid(theta), _as_grid(theta_ref), _as_grid(theta0)
    design = design or Design("uniform", th.dim)
    consts = sieve_constants(a_n, noise.params)
    h_norm = l2_distance(th, tr, design)
    X = design.sample(rng, n_samples)
    e = noise.sample(rng, n_samples)
    h = th(X) - tr(X)
    g1 = h * e
    g2 = h * (2 * th(X) - tr(X) - t0(X))
    grid = union_grid(th, tr, t0)
    t0_sup = float(np.max(np.abs(t0.values)))
    g2_sup = float(np.max(np.abs(
        (th.resample(grid).values - tr.resample(grid).values)
        * (2 * th.resample(grid).values - tr.resample(grid).values - t0.resample(grid).values)
    )))

    b1, se1 = bernstein_norm_se(g1, consts["t_n"])
    sq = g2 ** 2
    b2 = math.sqrt(float(sq.mean()))
    se2 = float(sq.std()) / math.sqrt(n_samples)
    se2 = se2 / (2 * b2) if b2 > 0 else math.sqrt(se2)
    audits = [
        BernsteinAudit("g1 Bernstein norm <= C_n ||theta - theta_ref||", consts["t_n"], b1,
                       consts["C_n"] * h_norm, sigmas * se1, consts),
        BernsteinAudit("||g2||_2 <= (||theta0||_inf + 3 a_n) ||theta - theta_ref||", consts["t_n"], b2,
                       (t0_sup + 3 * a_n) * h_norm, sigmas * se2, consts),
        BernsteinAudit("||g2||_inf <= 2 a_n (||theta0||_inf + 3 a_n)", consts["t_n"], g2_sup,
                       2 * a_n * (t0_sup + 3 * a_n), 1e-12, consts),
    ]
    if strict:
        for a in audits:
            if not a.passed:
                raise AuditViolation(f"audit failed: {a.inequality}", a.to_dict())
    return audits


def run_bernstein_audit(family: str, scale: float, a_n: float = 1.0, dim: int = 2, repetitions: int = 50,
                        n_samples: int = 100_000, seed: int = 0, noise: NoiseModel | None = None) -> dict:
    """Randomized audit: theta, theta_ref, theta0 drawn from the variation ball of radius a_n."""
    noise = noise or make_noise(family, scale, seed=seed)
    rng = np.random.default_rng(seed)
    records = []
    for rep in range(repetitions):
        theta, theta_ref, theta0 = (synthesize(random_mixture(rng, dim, a_n)) for _ in range(3))
        for a in audit_g_classes(theta, theta_ref, theta0, a_n, noise, n_samples, rng):
            rec = a.to_dict()
            rec["repetition"] = rep
            records.append(rec)
    failures = [r for r in records if not r["pass"]]
    return {
        "noise": {"family": family, "scale": scale, "params": asdict(noise.params)},
        "a_n": a_n,
        "dim": dim,
        "repetitions": repetitions,
        "n_samples": n_samples,
        "seed": seed,
        "audits": records,
        "violations": failures,
        "pass": not failures,
    }
