"""Loss families with their Lipschitz and L2-smoothness constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.special import expit, logit

from .errors import NotAMinimizer, UnknownFamily

FAMILIES = ("square_bounded", "logistic", "square_subexp")

# names accepted on the command line and in config files
ALIASES = {
    "square": "square_bounded",
    "square-bounded": "square_bounded",
    "square_bounded": "square_bounded",
    "logistic": "logistic",
    "square-subexp": "square_subexp",
    "square_subexp": "square_subexp",
}


def _square_value(u, y):
    return (np.asarray(y, dtype=float) - u) ** 2


def _square_grad(u, y):
    return 2.0 * (np.asarray(u, dtype=float) - y)


def _logistic_value(u, y):
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    return y * np.logaddexp(0.0, -u) + (1.0 - y) * np.logaddexp(0.0, u)


def _logistic_grad(u, y):
    return expit(np.asarray(u, dtype=float)) - y


def _identity_point(y):
    return np.asarray(y, dtype=float)


def _logistic_point(y):
    # logit(1) = inf, logit(0) = -inf: monotone over the whole line
    return logit(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class LossSpec:
    family: str
    a_tilde: float
    value: Callable[[Any, Any], np.ndarray] = field(repr=False)
    subgradient_u: Callable[[Any, Any], np.ndarray] = field(repr=False)
    unimodal_point: Callable[[Any], np.ndarray] = field(repr=False)
    lipschitz: float
    smoothness: float

    @property
    def is_square(self) -> bool:
        return self.family in ("square_bounded", "square_subexp")

    def empirical_risk(self, u, y) -> float:
        return float(np.mean(self.value(u, y)))


def canonical_family(name: str) -> str:
    try:
        return ALIASES[name]
    except KeyError:
        raise UnknownFamily(f"unknown loss family {name!r}; choose from {sorted(set(ALIASES))}") from None


def make_loss(family: str, a_tilde: float = 1.0) -> LossSpec:
    """Build a loss; ``a_tilde`` bounds |u| and |y| on the admissible range."""
    family = canonical_family(family)
    a_tilde = float(a_tilde)
    if not a_tilde >= 0.0:
        raise ValueError("a_tilde must be nonnegative")
    if family == "square_bounded":
        return LossSpec(family, a_tilde, _square_value, _square_grad, _identity_point,
                        4.0 * a_tilde, 4.0 * a_tilde)
    if family == "logistic":
        smooth = 2.0 * math.sqrt(1.0 + math.exp(a_tilde)) if a_tilde < 700 else math.inf
        return LossSpec(family, a_tilde, _logistic_value, _logistic_grad, _logistic_point,
                        1.0, smooth)
    # unbounded responses: constants come from the sub-exponential noise certificate
    return LossSpec(family, a_tilde, _square_value, _square_grad, _identity_point,
                    math.inf, math.inf)


def logistic_curvature(q):
    s = expit(np.asarray(q, dtype=float))
    out = s * (1.0 - s)
    return float(out) if np.ndim(out) == 0 else out


def curvature_floor(a_tilde: float) -> float:
    """Lower bound on the logistic curvature over [-a_tilde, a_tilde]."""
    return 0.5 / (1.0 + math.exp(a_tilde))


@dataclass(frozen=True)
class DissimilarityEstimate:
    value: float
    std_error: float
    reference: Any = field(repr=False)
    n_mc: int = 0
    risk: float = float("nan")
    reference_risk: float = float("nan")


def _as_estimate(out):
    if isinstance(out, tuple):
        risk, se = out[0], out[1]
        n = int(out[2]) if len(out) > 2 else 0
    elif hasattr(out, "value"):
        risk, se, n = out.value, out.std_error, getattr(out, "n_mc", 0)
    else:
        risk, se, n = out, 0.0, 0
    return float(risk), float(se), n


def dissimilarity(theta, reference, loss: LossSpec, risk_oracle) -> DissimilarityEstimate:
    """Square root of the excess risk of ``theta`` over ``reference``.

    ``risk_oracle(f)`` returns the population risk of ``f`` as a float, a
    ``(risk, std_error[, n])`` tuple, or an object with ``value`` and
    ``std_error``.  Negative differences inside three standard errors are
    clipped to zero; anything worse means ``reference`` is not a minimizer.
    """
    r1, se1, n1 = _as_estimate(risk_oracle(theta))
    if theta is reference:
        r2, se2, n2 = r1, se1, n1
        se = 0.0
    else:
        r2, se2, n2 = _as_estimate(risk_oracle(reference))
        se = math.hypot(se1, se2)
    diff = r1 - r2
    if not (math.isfinite(diff) and math.isfinite(se)):
        raise FloatingPointError("non-finite risk")
    if diff < -3.0 * se - 1e-12:
        raise NotAMinimizer(
            f"reference risk {r2:.6g} exceeds candidate risk {r1:.6g} by more than 3 standard errors"
        )
    d = math.sqrt(max(diff, 0.0))
    # delta method away from zero, square root of the error scale near it
    d_se = se / (2.0 * d) if d > 0 and se > 0 else math.sqrt(se)
    d_se = min(d_se, math.sqrt(se))
    return DissimilarityEstimate(d, d_se, reference, max(n1, n2), r1, r2)
