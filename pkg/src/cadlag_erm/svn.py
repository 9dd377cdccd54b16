"""Piecewise-constant càdlàg functions on [0,1]^d and their sectional variation.

A :class:`GridFunction` is right-continuous and constant on each cell
``[t_k, t_{k+1})`` of a product grid; its value at the corner ``t_k``
extends north-east up to the next breakpoint (or up to 1).  For such
functions every section measure is atomic, so the sectional variation
norm can be computed exactly by mixed differences.

Subsets of coordinates are encoded as bitmasks: bit ``j`` set means
axis ``j`` (0-based) belongs to the subset.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import DegenerateScale, DomainError, NormBudgetExceeded

EXACT_TOL = 1e-12


# ---------------------------------------------------------------------------
# subsets
# ---------------------------------------------------------------------------

def subset_axes(bits: int) -> tuple[int, ...]:
    return tuple(j for j in range(bits.bit_length()) if bits >> j & 1)


def subset_bits(axes: Sequence[int]) -> int:
    bits = 0
    for j in axes:
        bits |= 1 << int(j)
    return bits


def nonempty_subsets(dim: int) -> range:
    """All nonempty subsets of ``{0, ..., dim-1}`` in increasing bitmask order."""
    return range(1, 1 << dim)


def subset_label(bits: int) -> str:
    """Human-readable 1-based label, e.g. ``{1,2}``."""
    return "{" + ",".join(str(j + 1) for j in subset_axes(bits)) + "}"


# ---------------------------------------------------------------------------
# grid functions
# ---------------------------------------------------------------------------

def _as_breakpoints(axis: Sequence[float]) -> np.ndarray:
    arr = np.array(axis, dtype=float).ravel()
    if arr.size == 0 or arr[0] != 0.0:
        raise ValueError("each axis must start with the breakpoint 0")
    if arr[-1] > 1.0:
        raise ValueError("breakpoints must lie in [0, 1]")
    if np.any(np.diff(arr) <= 0):
        raise ValueError("breakpoints must be strictly increasing")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Right-continuous step function on a product grid of [0,1]^d."""

    grid: tuple[np.ndarray, ...]
    values: np.ndarray

    def __post_init__(self):
        grid = tuple(_as_breakpoints(g) for g in self.grid)
        if not grid:
            raise ValueError("dimension must be at least 1")
        values = np.array(self.values, dtype=float)
        shape = tuple(len(g) for g in grid)
        if values.shape != shape:
            if values.size == int(np.prod(shape)):
                values = values.reshape(shape)
            else:
                raise ValueError(f"values shape {values.shape} does not match grid {shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return len(self.grid)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @classmethod
    def constant(cls, c: float, dim: int) -> "GridFunction":
        return cls(tuple(np.zeros(1) for _ in range(dim)), np.full((1,) * dim, float(c)))

    @classmethod
    def indicator(cls, corner: Sequence[float]) -> "GridFunction":
        """``x -> 1{x >= corner}`` (coordinatewise).  Zero coordinates are always satisfied."""
        corner = [float(c) for c in corner]
        grid = tuple(np.array([0.0, c]) if c > 0 else np.zeros(1) for c in corner)
        values = np.zeros(tuple(len(g) for g in grid))
        values[tuple(-1 for _ in grid)] = 1.0
        return cls(grid, values)

    @classmethod
    def from_callable(cls, fn, grid: Sequence[Sequence[float]]) -> "GridFunction":
        """Sample ``fn`` at every grid corner."""
        grid = tuple(_as_breakpoints(g) for g in grid)
        mesh = np.meshgrid(*grid, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        vals = np.asarray([fn(p) for p in pts], dtype=float)
        return cls(grid, vals.reshape(tuple(len(g) for g in grid)))

    def locate(self, x) -> tuple[np.ndarray, ...]:
        """Per-axis index of the last breakpoint <= x, for an (m, d) array."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {x.shape[1]}")
        if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
            raise DomainError("evaluation points must lie in [0,1]^d")
        return tuple(np.searchsorted(g, x[:, k], side="right") - 1 for k, g in enumerate(self.grid))

    def __call__(self, x) -> np.ndarray | float:
        arr = np.asarray(x, dtype=float)
        out = self.values[self.locate(arr)]
        return float(out[0]) if arr.ndim == 1 else out

    def resample(self, grid: Sequence[Sequence[float]]) -> "GridFunction":
        """The same function expressed on another (typically finer) grid."""
        grid = tuple(_as_breakpoints(g) for g in grid)
        idx = [np.searchsorted(own, g, side="right") - 1 for own, g in zip(self.grid, grid)]
        return GridFunction(grid, self.values[np.ix_(*idx)])

    def refine(self, axis: int, t: float) -> "GridFunction":
        """Insert a redundant breakpoint; the function is unchanged."""
        g = list(self.grid)
        g[axis] = np.union1d(g[axis], [float(t)])
        return self.resample(g)

    def cell_volumes(self) -> np.ndarray:
        """Lebesgue volume of the cell anchored at each corner."""
        widths = [np.diff(np.append(g, 1.0)) for g in self.grid]
        vol = widths[0]
        for w in widths[1:]:
            vol = np.multiply.outer(vol, w)
        return vol

    def l2_norm(self) -> float:
        """L2 norm under the Lebesgue measure on [0,1]^d (exact)."""
        return float(np.sqrt(np.sum(self.cell_volumes() * self.values ** 2)))

    # -- arithmetic on the union grid -------------------------------------
    def _binary(self, other, op) -> "GridFunction":
        if isinstance(other, GridFunction):
            grid = union_grid(self, other)
            return GridFunction(grid, op(self.resample(grid).values, other.resample(grid).values))
        return GridFunction(self.grid, op(self.values, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def abs(self) -> "GridFunction":
        return GridFunction(self.grid, np.abs(self.values))

    def equals(self, other: "GridFunction", atol: float = EXACT_TOL) -> bool:
        """Pointwise equality (as functions, not as representations)."""
        if self.dim != other.dim:
            return False
        grid = union_grid(self, other)
        return bool(np.allclose(self.resample(grid).values, other.resample(grid).values, rtol=0, atol=atol))

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "grid": [g.tolist() for g in self.grid],
            "values": self.values.ravel(order="C").tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridFunction":
        grid = tuple(np.array(g, dtype=float) for g in data["grid"])
        if len(grid) != int(data["dim"]):
            raise ValueError("dim does not match the number of grid axes")
        shape = tuple(len(g) for g in grid)
        return cls(grid, np.array(data["values"], dtype=float).reshape(shape))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        return cls.from_dict(json.loads(text))


def union_grid(*fns: GridFunction) -> tuple[np.ndarray, ...]:
    dim = fns[0].dim
    if any(f.dim != dim for f in fns):
        raise ValueError("dimension mismatch")
    return tuple(np.unique(np.concatenate([f.grid[k] for f in fns])) for k in range(dim))


def lift(face_fn: GridFunction, bits: int, dim: int) -> GridFunction:
    """Extend a function of ``x_s`` to [0,1]^dim, constant in the other coordinates."""
    axes = subset_axes(bits)
    if len(axes) != face_fn.dim:
        raise ValueError("face function dimension does not match the subset")
    grid = []
    shape = []
    for j in range(dim):
        if j in axes:
            g = face_fn.grid[axes.index(j)]
        else:
            g = np.zeros(1)
        grid.append(g)
        shape.append(len(g))
    return GridFunction(tuple(grid), face_fn.values.reshape(shape))


# ---------------------------------------------------------------------------
# section measures and the norm
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SectionMeasure:
    """Atomic signed measure generated by the section ``x_s -> f(x_s, 0_{-s})``.

    ``masses[k]`` sits at the face corner ``(grid[0][k_0 + 1], ...)``: only
    corners strictly away from the lower faces carry mass, the rest of the
    function is accounted for by lower-order sections.
    """

    subset: int
    grid: tuple[np.ndarray, ...]
    masses: np.ndarray

    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.masses)))

    def atoms(self) -> list[tuple[tuple[float, ...], float]]:
        out = []
        for idx in zip(*np.nonzero(self.masses)):
            corner = tuple(float(self.grid[k][i + 1]) for k, i in enumerate(idx))
            out.append((corner, float(self.masses[idx])))
        return out


def section_values(f: GridFunction, bits: int) -> np.ndarray:
    axes = subset_axes(bits)
    index = tuple(slice(None) if j in axes else 0 for j in range(f.dim))
    return f.values[index]


def section_measure(f: GridFunction, bits: int) -> SectionMeasure:
    sec = section_values(f, bits)
    masses = sec
    for k in range(sec.ndim):
        masses = np.diff(masses, axis=k)
    axes = subset_axes(bits)
    return SectionMeasure(bits, tuple(f.grid[j] for j in axes), masses)


def svn_exact(f: GridFunction) -> float:
    """Sectional variation (Hardy-Krause) norm anchored at the origin."""
    total = abs(float(f.values[(0,) * f.dim]))
    for bits in nonempty_subsets(f.dim):
        total += section_measure(f, bits).total_variation()
    return total


def sup_norm(f: GridFunction) -> float:
    return float(np.max(np.abs(f.values)))


# ---------------------------------------------------------------------------
# mixture representation
# ---------------------------------------------------------------------------

def cdf_measure(g: GridFunction) -> np.ndarray:
    """Full measure of a face CDF, including atoms on the lower faces."""
    mass = g.values
    for k in range(g.dim):
        mass = np.diff(mass, axis=k, prepend=0.0)
    return mass


def is_cdf(g: GridFunction, tol: float = EXACT_TOL) -> bool:
    if np.any(g.values < -tol) or np.any(g.values > 1.0 + tol):
        return False
    if np.any(cdf_measure(g) < -tol):
        return False
    return abs(float(g.values[(-1,) * g.dim]) - 1.0) <= tol


def cdf_from_masses(grid: Sequence[np.ndarray], masses: np.ndarray) -> GridFunction:
    """CDF of nonnegative atoms placed at the face grid corners (normalized)."""
    masses = np.asarray(masses, dtype=float)
    total = masses.sum()
    if total <= 0:
        raise ValueError("masses must have positive total")
    vals = masses / total
    for k in range(vals.ndim):
        vals = np.cumsum(vals, axis=k)
    # guard the top corner against cumulative rounding
    vals = np.minimum(vals, 1.0)
    vals[(-1,) * vals.ndim] = 1.0
    return GridFunction(tuple(grid), vals)


def point_mass_cdf(grid: Sequence[np.ndarray], corner_index: Sequence[int]) -> GridFunction:
    masses = np.zeros(tuple(len(g) for g in grid))
    masses[tuple(corner_index)] = 1.0
    return cdf_from_masses(grid, masses)


@dataclass(frozen=True, eq=False)
class MixtureComponent:
    subset: int
    sign: int  # +1 for the positive part, -1 for the negative part
    alpha: float
    cdf: GridFunction


@dataclass(frozen=True, eq=False)
class MixtureRepresentation:
    """``f = f0 + (M - |f0|) * sum_s [a_{s,1} g_{s,1}(x_s) - a_{s,2} g_{s,2}(x_s)]``."""

    dim: int
    f0: float
    M: float
    components: tuple[MixtureComponent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def scale(self) -> float:
        return self.M - abs(self.f0)

    def alphas(self) -> np.ndarray:
        return np.array([c.alpha for c in self.components])

    def validate(self, tol: float = EXACT_TOL) -> None:
        if self.M < 0:
            raise ValueError("M must be nonnegative")
        if abs(self.f0) > self.M + tol:
            raise ValueError("|f0| exceeds M")
        alphas = self.alphas()
        if np.any(alphas < 0):
            raise ValueError("alphas must be nonnegative")
        if alphas.sum() > 1.0 + tol:
            raise ValueError("alphas must sum to at most 1")
        for c in self.components:
            if c.sign not in (1, -1):
                raise ValueError("component sign must be +1 or -1")
            if not 0 < c.subset < (1 << self.dim):
                raise ValueError("component subset out of range")
            if c.cdf.dim != len(subset_axes(c.subset)):
                raise ValueError("cdf dimension does not match its subset")
            if not is_cdf(c.cdf, tol=1e-9):
                raise ValueError(f"component on {subset_label(c.subset)} is not a CDF")

    def ambient_grid(self) -> tuple[np.ndarray, ...]:
        axes = [[np.zeros(1)] for _ in range(self.dim)]
        for c in self.components:
            for k, j in enumerate(subset_axes(c.subset)):
                axes[j].append(c.cdf.grid[k])
        return tuple(np.unique(np.concatenate(a)) for a in axes)


def decompose(f: GridFunction, M: float) -> MixtureRepresentation:
    """Write ``f`` as a signed mixture of face CDFs with norm budget ``M``.

    Each section measure is split into its positive and negative parts
    (Jordan decomposition); each part is normalized into a CDF on the face
    grid.  Empty parts are represented by a point mass at the face origin
    with zero weight.
    """
    norm = svn_exact(f)
    M = float(M)
    if norm > M + EXACT_TOL:
        raise NormBudgetExceeded(f"sectional variation {norm!r} exceeds budget {M!r}")
    f0 = float(f.values[(0,) * f.dim])
    scale = M - abs(f0)
    nonconstant = norm - abs(f0) > 0.0
    if scale <= 0 and nonconstant:
        raise DegenerateScale("M equals |f(0)| but f is not constant")
    components = []
    for bits in nonempty_subsets(f.dim):
        sm = section_measure(f, bits)
        face_grid = sm.grid
        for sign, part in ((1, np.maximum(sm.masses, 0.0)), (-1, np.maximum(-sm.masses, 0.0))):
            mass = float(part.sum())
            if mass > 0 and scale > 0:
                padded = np.pad(part, [(1, 0)] * part.ndim)
                cdf = cdf_from_masses(face_grid, padded)
                alpha = mass / scale
            else:
                cdf = point_mass_cdf(face_grid, (0,) * len(face_grid))
                alpha = 0.0
            components.append(MixtureComponent(bits, sign, alpha, cdf))
    return MixtureRepresentation(f.dim, f0, M, tuple(components))


def synthesize(rep: MixtureRepresentation) -> GridFunction:
    grid = rep.ambient_grid()
    values = np.full(tuple(len(g) for g in grid), rep.f0)
    scale = rep.scale
    for c in rep.components:
        if c.alpha == 0.0:
            continue
        axes = subset_axes(c.subset)
        face = c.cdf.resample([grid[j] for j in axes]).values
        shape = [len(grid[j]) if j in axes else 1 for j in range(rep.dim)]
        values = values + (c.sign * scale * c.alpha) * face.reshape(shape)
    return GridFunction(grid, values)


# ---------------------------------------------------------------------------
# random generators used by tests, audits and the simulation harness
# ---------------------------------------------------------------------------

def random_grid(rng: np.random.Generator, dim: int, max_points: int = 8) -> tuple[np.ndarray, ...]:
    axes = []
    for _ in range(dim):
        k = int(rng.integers(1, max_points + 1))
        inner = np.sort(rng.choice(np.arange(1, 100), size=k - 1, replace=False)) / 100.0
        axes.append(np.concatenate([[0.0], inner]))
    return tuple(axes)


def random_grid_function(rng: np.random.Generator, dim: int, max_points: int = 8) -> GridFunction:
    grid = random_grid(rng, dim, max_points)
    return GridFunction(grid, rng.normal(size=tuple(len(g) for g in grid)))


def random_cdf(rng: np.random.Generator, grid: Sequence[np.ndarray], concentration: float = 1.0) -> GridFunction:
    shape = tuple(len(g) for g in grid)
    masses = rng.dirichlet(np.full(int(np.prod(shape)), concentration)).reshape(shape)
    # Dirichlet draws can underflow to exact zeros everywhere but one cell; still valid.
    return cdf_from_masses(grid, masses)


def random_mixture(
    rng: np.random.Generator,
    dim: int,
    M: float,
    face_grid: Sequence[np.ndarray] | None = None,
    max_points: int = 5,
) -> MixtureRepresentation:
    """Random representation; alphas drawn from a Dirichlet with a slack coordinate."""
    ambient = tuple(face_grid) if face_grid is not None else random_grid(rng, dim, max_points)
    subsets = list(nonempty_subsets(dim))
    weights = rng.dirichlet(np.ones(2 * len(subsets) + 1))[:-1]
    f0 = float(rng.uniform(-M, M)) if M > 0 else 0.0
    comps = []
    for i, (bits, sign) in enumerate(itertools.product(subsets, (1, -1))):
        axes = subset_axes(bits)
        cdf = random_cdf(rng, [ambient[j] for j in axes])
        comps.append(MixtureComponent(bits, sign, float(weights[i]), cdf))
    return MixtureRepresentation(dim, f0, float(M), tuple(comps))


def corners(grid: Sequence[np.ndarray]) -> Iterator[tuple[float, ...]]:
    return itertools.product(*[g.tolist() for g in grid])
