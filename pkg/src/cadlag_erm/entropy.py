"""Constructive bracketing for bounded-variation classes.

Pieces:

* ``simplex_cover``: a lattice cover of the weight simplex in sup norm.
* ``cdf_brackets``: bracketings of distribution functions on a fixed face grid.
* ``compose_brackets``: brackets for functions of variation norm at most one,
  assembled from a cover point and one CDF bracket per signed face component.
* ``transform_bracket``: brackets for a loss composed with a bracketed function.
* ``entropy_integral_check``: the integral of eps^{-1/2} log(1/eps)^{d-1}.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gamma, gammaincc

from .errors import InvalidEpsilon, QuadratureFailure, TooLarge
from .losses import LossSpec
from .svn import (
    GridFunction,
    MixtureRepresentation,
    lift,
    nonempty_subsets,
    subset_axes,
    synthesize,
    union_grid,
)

CONTAIN_TOL = 1e-12
BRUTEFORCE_ATOMS = 20


# ---------------------------------------------------------------------------
# brackets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormTag:
    order: int = 2
    measure: str = "lebesgue"  # lebesgue | empirical


@dataclass(frozen=True, eq=False)
class Bracket:
    lower: GridFunction
    upper: GridFunction
    size: float
    norm_tag: NormTag = field(default_factory=NormTag)

    @classmethod
    def from_pair(cls, lower: GridFunction, upper: GridFunction) -> "Bracket":
        return cls(lower, upper, (upper - lower).l2_norm())

    def contains(self, f: GridFunction, tol: float = CONTAIN_TOL) -> bool:
        """Pointwise containment, checked at every corner of the union grid."""
        grid = union_grid(self.lower, self.upper, f)
        lo = self.lower.resample(grid).values
        hi = self.upper.resample(grid).values
        v = f.resample(grid).values
        return bool(np.all(lo <= v + tol) and np.all(v <= hi + tol))

    def empirical_size(self, X) -> float:
        gap = np.asarray(self.upper(X)) - np.asarray(self.lower(X))
        return float(np.sqrt(np.mean(gap ** 2)))


# ---------------------------------------------------------------------------
# simplex cover
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplexCover:
    """Lattice ``spacing * Z^K`` intersected with ``{w >= 0, sum w <= 1}``.

    Every point of the simplex is within sup distance ``epsilon`` of the
    lattice point obtained by rounding each coordinate down.  For
    ``epsilon >= 1`` the origin alone is a cover.
    """

    epsilon: float
    K: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.K < 1:
            raise ValueError("K must be at least 1")

    @property
    def levels(self) -> int:
        """Largest lattice index: coordinates are k * spacing with sum k <= levels."""
        if self.epsilon >= 1:
            return 0
        return int(math.floor(1.0 / self.epsilon + 1e-9))

    @property
    def spacing(self) -> float:
        return self.epsilon

    @property
    def count(self) -> int:
        # lattice points k in N^K with sum k <= N
        return math.comb(self.levels + self.K, self.K)

    def log_count(self) -> float:
        N, K = self.levels, self.K
        return math.lgamma(N + K + 1) - math.lgamma(N + 1) - math.lgamma(K + 1)

    def index_of(self, alpha) -> tuple[int, ...]:
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (self.K,):
            raise ValueError(f"expected {self.K} weights")
        if np.any(alpha < -CONTAIN_TOL) or alpha.sum() > 1.0 + 1e-9:
            raise ValueError("point is not in the simplex")
        if self.levels == 0:
            return (0,) * self.K
        k = np.floor(np.maximum(alpha, 0.0) / self.spacing).astype(np.int64)
        # rounding can push k * spacing just above alpha
        k = np.where(k * self.spacing > alpha, k - 1, k)
        k = np.maximum(k, 0)
        return tuple(int(v) for v in k)

    def point(self, index: Sequence[int]) -> np.ndarray:
        return np.asarray(index, dtype=float) * self.spacing

    def nearest(self, alpha) -> np.ndarray:
        return self.point(self.index_of(alpha))

    def points(self, limit: int = 1_000_000) -> Iterator[np.ndarray]:
        if self.count > limit:
            raise TooLarge(f"cover has {self.count} points")
        N = self.levels
        for k in itertools.product(range(N + 1), repeat=self.K):
            if sum(k) <= N:
                yield self.point(k)

    def random_index(self, rng: np.random.Generator) -> tuple[int, ...]:
        return self.index_of(rng.dirichlet(np.ones(self.K + 1))[:-1])


def simplex_cover(epsilon: float, K: int) -> SimplexCover:
    return SimplexCover(float(epsilon), int(K))


def crude_cover_log_bound(epsilon: float, d: int) -> float:
    """d log(1/eps) + d(d+1) log 2, a crude count for the weight cover, too small for some (eps, K)."""
    return d * math.log(1.0 / epsilon) + d * (d + 1) * math.log(2.0)


# ---------------------------------------------------------------------------
# CDF bracketings on a fixed face grid
# ---------------------------------------------------------------------------

def _levels_for(epsilon: float) -> int:
    return max(1, int(math.ceil(1.0 / epsilon - 1e-9)))


def quantize_levels(values: np.ndarray, epsilon: float) -> np.ndarray:
    """Level k with k*eps <= v <= min(1, (k+1)*eps), robust to rounding."""
    L = _levels_for(epsilon)
    v = np.asarray(values, dtype=float)
    k = np.floor(v / epsilon).astype(np.int64)
    k = np.where(k * epsilon > v, k - 1, k)
    k = np.where((k + 1) * epsilon < v, k + 1, k)
    return np.clip(k, 0, L - 1)


def _level_bracket(grid, k: np.ndarray, epsilon: float) -> Bracket:
    lo = GridFunction(grid, k * epsilon)
    hi = GridFunction(grid, np.minimum((k + 1) * epsilon, 1.0))
    return Bracket.from_pair(lo, hi)


def _monotone_1d_count(m: int, L: int) -> int:
    # nondecreasing sequences of length m in {0..L-1} whose last entry is L-1
    return math.comb(m - 1 + L - 1, m - 1)


def _monotone_2d_count(m1: int, m2: int, L: int) -> int:
    """Order-preserving maps from the m1 x m2 grid to {0..L-1} with top corner L-1."""
    rows = [r for r in itertools.combinations_with_replacement(range(L), m2)]
    if len(rows) > 20_000:
        raise TooLarge("too many monotone rows to count exactly")
    R = np.array(rows)
    dom = np.all(R[:, None, :] <= R[None, :, :], axis=2)  # row a below row b
    ways = np.ones(len(rows), dtype=object)
    for _ in range(m1 - 1):
        ways = np.array([sum(ways[dom[:, b]]) for b in range(len(rows))], dtype=object)
    last_ok = R[:, -1] == L - 1
    return int(sum(ways[last_ok]))


def _enumerate_monotone(shape: tuple[int, ...], top: int, limit: int = 2_000_000) -> np.ndarray:
    """All order-preserving integer arrays on the grid with values in {0..top}."""
    cells = int(np.prod(shape))
    if (top + 1) ** cells > limit:
        raise TooLarge("enumeration budget exceeded")
    allv = np.array(list(itertools.product(range(top + 1), repeat=cells)), dtype=np.int8)
    arr = allv.reshape((-1,) + shape)
    ok = np.ones(arr.shape[0], dtype=bool)
    for ax in range(len(shape)):
        ok &= np.all(np.diff(arr, axis=ax + 1) >= 0, axis=tuple(range(1, len(shape) + 1)))
    return arr[ok]


class BracketSet:
    """A bracketing of the CDFs supported on a fixed face grid.

    ``mode='construct_1d'`` and ``mode='quantize'`` use the staircase levels
    ``[k eps, min(1, (k+1) eps)]``; brackets are addressed by their level
    array and produced lazily.  ``mode='bruteforce_tiny'`` stores an
    explicit list obtained by greedy set cover.
    """

    def __init__(self, epsilon: float, face_grid: Sequence[np.ndarray], mode: str,
                 brackets: list[Bracket] | None = None, class_tag: str = "cdf",
                 universe_size: int | None = None):
        self.epsilon = float(epsilon)
        self.face_grid = tuple(np.asarray(g, dtype=float) for g in face_grid)
        self.mode = mode
        self.class_tag = class_tag
        self._brackets = brackets
        self.universe_size = universe_size

    @property
    def dim(self) -> int:
        return len(self.face_grid)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.face_grid)

    @property
    def levels(self) -> int:
        return _levels_for(self.epsilon)

    @property
    def count(self) -> int:
        if self._brackets is not None:
            return len(self._brackets)
        return _lattice_count(self.shape, self.levels)

    def log_count(self) -> float:
        return math.log(self.count)

    @property
    def brackets(self) -> list[Bracket]:
        if self._brackets is None:
            levels = _enumerate_monotone(self.shape, self.levels - 1)
            top = (-1,) * self.dim
            levels = levels[levels[(slice(None),) + top] == self.levels - 1]
            self._brackets = [_level_bracket(self.face_grid, k.astype(np.int64), self.epsilon) for k in levels]
        return self._brackets

    def __len__(self) -> int:
        return self.count

    def _on_grid(self, g: GridFunction) -> GridFunction:
        for own, other in zip(self.face_grid, g.grid):
            if not np.all(np.isin(other, own)):
                raise ValueError("CDF has breakpoints outside the bracketing's face grid")
        return g.resample(self.face_grid)

    def index_for(self, g: GridFunction):
        """Address of a bracket containing the CDF ``g``."""
        g = self._on_grid(g)
        if self._brackets is not None:
            for i, b in enumerate(self._brackets):
                if b.contains(g):
                    return i
            raise ValueError("CDF is not covered by this bracketing")
        return quantize_levels(g.values, self.epsilon)

    def bracket(self, index) -> Bracket:
        if self._brackets is not None:
            return self._brackets[int(index)]
        return _level_bracket(self.face_grid, np.asarray(index, dtype=np.int64), self.epsilon)

    def bracket_for(self, g: GridFunction) -> Bracket:
        return self.bracket(self.index_for(g))

    def random_index(self, rng: np.random.Generator):
        if self._brackets is not None:
            return int(rng.integers(len(self._brackets)))
        from .svn import random_cdf

        return self.index_for(random_cdf(rng, self.face_grid, concentration=0.5))


def _lattice_count(shape: tuple[int, ...], L: int) -> int:
    if len(shape) == 1:
        return _monotone_1d_count(shape[0], L)
    if len(shape) == 2:
        return _monotone_2d_count(shape[0], shape[1], L)
    raise TooLarge("exact bracket counts are only available for faces of dimension <= 2")


def _bruteforce(epsilon: float, face_grid, quant: int) -> BracketSet:
    shape = tuple(len(g) for g in face_grid)
    cells = int(np.prod(shape))
    if cells * quant > BRUTEFORCE_ATOMS:
        raise TooLarge(f"{cells} cells x {quant} levels exceeds the budget of {BRUTEFORCE_ATOMS} atoms")
    mono = _enumerate_monotone(shape, quant).reshape(-1, cells).astype(np.int64)
    universe = mono[mono[:, -1] == quant]
    vol = GridFunction(tuple(face_grid), np.zeros(shape)).cell_volumes().ravel()
    # candidate brackets: ordered pairs of monotone quantized staircases within size eps
    lo, hi = mono[:, None, :], mono[None, :, :]
    le = np.all(lo <= hi, axis=2)
    gap = (hi - lo) / quant
    size = np.sqrt(np.einsum("abk,k->ab", gap * gap, vol))
    ia, ib = np.nonzero(le & (size <= epsilon + 1e-12))
    if len(ia) * len(universe) > 50_000_000:
        raise TooLarge("set-cover matrix too large")
    covers = np.all(mono[ia][:, None, :] <= universe[None, :, :], axis=2) & np.all(
        universe[None, :, :] <= mono[ib][:, None, :], axis=2
    )
    uncovered = np.ones(len(universe), dtype=bool)
    chosen = []
    while uncovered.any():
        gain = covers[:, uncovered].sum(axis=1)
        best = int(np.argmax(gain))
        if gain[best] == 0:
            raise RuntimeError("set cover stalled")
        chosen.append(best)
        uncovered &= ~covers[best]
    brackets = []
    for c in chosen:
        l = GridFunction(tuple(face_grid), mono[ia[c]].reshape(shape) / quant)
        u = GridFunction(tuple(face_grid), mono[ib[c]].reshape(shape) / quant)
        brackets.append(Bracket.from_pair(l, u))
    return BracketSet(epsilon, face_grid, "bruteforce_tiny", brackets, universe_size=len(universe))


def cdf_brackets(epsilon: float, face_grid: Sequence[Sequence[float]], mode: str = "quantize",
                 quant: int | None = None) -> BracketSet:
    """Bracketing of all CDFs on ``face_grid`` with L2(Lebesgue) size at most ``epsilon``.

    ``construct_1d``: staircase brackets for monotone functions, 1-d faces only.
    ``quantize``: the same staircase construction on faces of any dimension.
    ``bruteforce_tiny``: greedy set cover of the CDFs with values in
    ``{0, 1/quant, ..., 1}``; an upper-bound oracle for tiny grids.
    """
    if not 0 < epsilon <= 1:
        raise InvalidEpsilon("epsilon must lie in (0, 1]")
    grid = tuple(np.asarray(g, dtype=float) for g in face_grid)
    GridFunction(grid, np.zeros(tuple(len(g) for g in grid)))  # validates the grid
    if mode == "construct_1d":
        if len(grid) != 1:
            raise ValueError("construct_1d requires a one-dimensional face")
        return BracketSet(epsilon, grid, mode)
    if mode == "quantize":
        return BracketSet(epsilon, grid, mode)
    if mode == "bruteforce_tiny":
        if quant is None:
            raise ValueError("bruteforce_tiny needs the quantization level count")
        return _bruteforce(epsilon, grid, int(quant))
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# composed brackets for the unit ball
# ---------------------------------------------------------------------------

def weight_slots(dim: int) -> list[tuple[int, int]]:
    """(subset, i) for all subsets including the empty one; i=1 positive, i=2 negative."""
    return [(bits, i) for bits in range(1 << dim) for i in (1, 2)]


def unit_ball_weights(rep: MixtureRepresentation) -> tuple[np.ndarray, dict]:
    """Weights on the full simplex and the CDF for each nonempty slot.

    The constant term enters through the empty subset with g = 1:
    ``alpha_{0,1} = max(f0, 0)``, ``alpha_{0,2} = max(-f0, 0)``, and the
    other weights are ``(M - |f0|) * alpha``.  Requires ``M <= 1``.
    """
    if rep.M > 1.0 + CONTAIN_TOL:
        raise ValueError("brackets are built for the unit ball; rescale so that M <= 1")
    slots = weight_slots(rep.dim)
    pos = {s: k for k, s in enumerate(slots)}
    w = np.zeros(len(slots))
    w[pos[(0, 1)]] = max(rep.f0, 0.0)
    w[pos[(0, 2)]] = max(-rep.f0, 0.0)
    cdfs = {}
    for c in rep.components:
        slot = (c.subset, 1 if c.sign > 0 else 2)
        if slot in cdfs:
            raise ValueError("at most one component per (subset, sign) is supported")
        cdfs[slot] = c.cdf
        w[pos[slot]] = rep.scale * c.alpha
    return w, cdfs


class ComposedBracketing:
    """Brackets (Lambda_1 - Gamma_2, Gamma_1 - Lambda_2) indexed by cover point and CDF brackets."""

    def __init__(self, cover: SimplexCover, cdf_sets: dict[int, BracketSet], epsilon: float, dim: int):
        self.cover = cover
        self.cdf_sets = cdf_sets
        self.epsilon = float(epsilon)
        self.dim = dim
        self.eta = self.epsilon / 2 ** (dim + 1)
        self.slots = weight_slots(dim)

    @property
    def count(self) -> int:
        total = self.cover.count
        for bits in nonempty_subsets(self.dim):
            total *= self.cdf_sets[bits].count ** 2
        return total

    def log_count(self) -> float:
        total = self.cover.log_count()
        for bits in nonempty_subsets(self.dim):
            total += 2 * self.cdf_sets[bits].log_count()
        return total

    def index_for(self, rep: MixtureRepresentation):
        if rep.dim != self.dim:
            raise ValueError("dimension mismatch")
        w, cdfs = unit_ball_weights(rep)
        j0 = self.cover.index_of(w)
        picks = {}
        for bits, i in self.slots:
            if bits == 0:
                continue
            g = cdfs.get((bits, i))
            if g is None:
                # empty slot: any CDF works, take the one with all mass at the origin
                g = GridFunction(self.cdf_sets[bits].face_grid, np.ones(self.cdf_sets[bits].shape))
            picks[(bits, i)] = self.cdf_sets[bits].index_for(g)
        return j0, picks

    def bracket(self, index) -> Bracket:
        j0, picks = index
        alpha = self.cover.point(j0)
        eta = self.eta
        lam = [GridFunction.constant(0.0, self.dim), GridFunction.constant(0.0, self.dim)]
        gam = [GridFunction.constant(0.0, self.dim), GridFunction.constant(0.0, self.dim)]
        for k, (bits, i) in enumerate(self.slots):
            if bits == 0:
                lo = hi = GridFunction.constant(1.0, self.dim)
            else:
                b = self.cdf_sets[bits].bracket(picks[(bits, i)])
                lo = lift(b.lower, bits, self.dim)
                hi = lift(b.upper, bits, self.dim)
            a = float(alpha[k])
            lam[i - 1] = lam[i - 1] + (lo * a - lo.abs() * eta)
            gam[i - 1] = gam[i - 1] + hi * (a + eta)
        lower = lam[0] - gam[1]
        upper = gam[0] - lam[1]
        return Bracket.from_pair(lower, upper)

    def bracket_for(self, rep: MixtureRepresentation) -> Bracket:
        return self.bracket(self.index_for(rep))

    def random_index(self, rng: np.random.Generator):
        picks = {}
        for bits, i in self.slots:
            if bits:
                picks[(bits, i)] = self.cdf_sets[bits].random_index(rng)
        return self.cover.random_index(rng), picks


def compose_brackets(cover: SimplexCover, cdf_sets: dict[int, BracketSet], epsilon: float) -> ComposedBracketing:
    if not 0 < epsilon <= 1:
        raise InvalidEpsilon("epsilon must lie in (0, 1]")
    dim = max(b.bit_length() for b in cdf_sets)
    missing = [b for b in nonempty_subsets(dim) if b not in cdf_sets]
    if missing:
        raise ValueError(f"missing CDF bracketings for subsets {missing}")
    for bits, s in cdf_sets.items():
        if s.dim != len(subset_axes(bits)):
            raise ValueError("bracketing dimension does not match its subset")
        if s.epsilon > epsilon + 1e-15:
            raise ValueError("CDF bracketings must have size at most epsilon")
    if cover.K != 2 ** (dim + 1):
        raise ValueError("cover must have one weight per (subset, sign) slot")
    if cover.epsilon > epsilon / 2 ** (dim + 1) * (1 + 1e-12):
        raise ValueError("cover radius must be at most epsilon / 2^(d+1)")
    return ComposedBracketing(cover, cdf_sets, epsilon, dim)


def unit_ball_bracketing(epsilon: float, face_grid: Sequence[Sequence[float]], mode: str = "quantize") -> ComposedBracketing:
    """Cover at eps/2^(d+1) plus one CDF bracketing per face of the ambient grid."""
    if not 0 < epsilon <= 1:
        raise InvalidEpsilon("epsilon must lie in (0, 1]")
    dim = len(face_grid)
    cover = simplex_cover(epsilon / 2 ** (dim + 1), 2 ** (dim + 1))
    sets = {}
    for bits in nonempty_subsets(dim):
        fg = [face_grid[j] for j in subset_axes(bits)]
        m = mode if (mode != "construct_1d" or len(fg) == 1) else "quantize"
        sets[bits] = cdf_brackets(epsilon, fg, m)
    return compose_brackets(cover, sets, epsilon)


@dataclass
class BracketAudit:
    epsilon: float
    class_tag: str
    bracket_count: int
    log_bracket_count: float
    max_size: float
    checked: int
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "class_tag": self.class_tag,
            "bracket_count": self.bracket_count,
            "log_bracket_count": self.log_bracket_count,
            "max_size": self.max_size,
            "checked": self.checked,
            "violations": self.violations,
        }

    @property
    def passed(self) -> bool:
        return not self.violations


def audit_unit_ball(epsilon: float, dim: int, n_functions: int, rng: np.random.Generator,
                    face_grid: Sequence[Sequence[float]] | None = None, n_random_brackets: int = 0,
                    size_factor: float = 5.0) -> BracketAudit:
    """Containment of random unit-ball mixtures in their designated brackets, and sizes."""
    from .svn import random_mixture

    if face_grid is None:
        face_grid = tuple(np.linspace(0, 1, 5, endpoint=False) for _ in range(dim))
    comp = unit_ball_bracketing(epsilon, face_grid)
    try:
        count = comp.count
    except TooLarge:
        count = -1
    violations = []
    max_size = 0.0
    for t in range(n_functions):
        rep = random_mixture(rng, dim, 1.0, face_grid=face_grid)
        f = synthesize(rep)
        b = comp.bracket_for(rep)
        max_size = max(max_size, b.size)
        if not b.contains(f):
            violations.append({"function": t, "kind": "containment"})
        if b.size > size_factor * epsilon:
            violations.append({"function": t, "kind": "size", "size": b.size})
    for t in range(n_random_brackets):
        b = comp.bracket(comp.random_index(rng))
        max_size = max(max_size, b.size)
        if b.size > size_factor * epsilon:
            violations.append({"bracket": t, "kind": "size", "size": b.size})
    return BracketAudit(epsilon, f"unit ball d={dim}", count, comp.log_count() if count > 0 else float("nan"),
                        max_size, n_functions + n_random_brackets, violations)


# ---------------------------------------------------------------------------
# brackets for loss classes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LossBracket:
    """Bracket for (x, y) -> L(theta(x), y); evaluated on samples."""

    source: Bracket
    loss: LossSpec
    clip: float

    def _ends(self, X, y):
        lo = np.clip(np.asarray(self.source.lower(X), dtype=float), -self.clip, self.clip)
        hi = np.clip(np.asarray(self.source.upper(X), dtype=float), -self.clip, self.clip)
        return lo, hi, np.asarray(y, dtype=float)

    def evaluate(self, X, y) -> tuple[np.ndarray, np.ndarray]:
        lo, hi, y = self._ends(X, y)
        f_lo = self.loss.value(lo, y)
        f_hi = self.loss.value(hi, y)
        ay = self.loss.unimodal_point(y)
        inside = (lo <= ay) & (ay <= hi)
        # value at the minimizer, only where it is finite and inside [l, u]
        at_min = self.loss.value(np.where(np.isfinite(ay), ay, 0.0), y)
        lam = np.where(inside & np.isfinite(ay), at_min, np.minimum(f_lo, f_hi))
        gam = np.maximum(f_lo, f_hi)
        return lam, gam

    def size(self, X, y) -> float:
        lam, gam = self.evaluate(X, y)
        return float(np.sqrt(np.mean((gam - lam) ** 2)))


def transform_bracket(b: Bracket, loss: LossSpec, clip: float) -> LossBracket:
    """Bracket for the loss class, from the three-case rule on unimodal losses."""
    if clip < 0:
        raise ValueError("clip must be nonnegative")
    return LossBracket(b, loss, float(clip))


# ---------------------------------------------------------------------------
# entropy integral
# ---------------------------------------------------------------------------

def entropy_integral_closed_form(delta: float, d: int) -> float:
    """2^d Gamma(d, log(1/delta)/2): substitute eps = exp(-t)."""
    L = math.log(1.0 / delta)
    return float(2.0 ** d * gamma(d) * gammaincc(d, L / 2.0))


@dataclass(frozen=True)
class EntropyIntegral:
    delta: float
    d: int
    value: float
    abserr: float
    ratio: float


def entropy_integral_check(delta: float, d: int, rtol: float = 1e-8) -> EntropyIntegral:
    """Adaptive quadrature of int_0^delta eps^{-1/2} log(1/eps)^{d-1} and its ratio
    to delta^{1/2} log(1/delta)^{d-1}."""
    if d < 1:
        raise ValueError("d must be at least 1")
    if not 0 < delta <= math.exp(-1) + 1e-15:
        raise ValueError("delta must lie in (0, 1/e]")
    # eps = u^2 removes the square-root singularity: integrand 2 (2 log(1/u))^{d-1}
    def integrand(u):
        return 2.0 * (-2.0 * math.log(u)) ** (d - 1) if u > 0 else (2.0 if d == 1 else math.inf)

    with np.errstate(all="ignore"):
        value, abserr = integrate.quad(integrand, 0.0, math.sqrt(delta), epsabs=0.0, epsrel=rtol * 1e-2, limit=200)
    if not math.isfinite(value) or abserr > rtol * abs(value):
        raise QuadratureFailure(f"quadrature error {abserr:.3g} for value {value:.6g}")
    ratio = value / (math.sqrt(delta) * math.log(1.0 / delta) ** (d - 1))
    return EntropyIntegral(delta, d, float(value), float(abserr), float(ratio))
