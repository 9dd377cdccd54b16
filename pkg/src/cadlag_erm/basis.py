"""Data-driven knot-indicator basis and fitted functions.

For every nonempty subset ``s`` of coordinates and every observation
``X_i`` the basis holds ``x -> 1{x_j >= X_ij for all j in s}``.  A linear
combination ``b0 + sum_j b_j phi_j`` with distinct (subset, knot) pairs
has sectional variation norm exactly ``|b0| + sum_j |b_j|``, which turns
ERM over a variation-norm ball into an l1-constrained problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, EmptyData
from .svn import GridFunction, nonempty_subsets, subset_axes

# dense fallback for subsets of size >= 3 is materialized below this many entries
_DENSE_LIMIT = 20_000_000


@dataclass(frozen=True)
class KnotBasisFunction:
    subset: int
    knot: tuple[float, ...]

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        axes = list(subset_axes(self.subset))
        return np.all(x[:, axes] >= np.asarray(self.knot), axis=1).astype(float)


@dataclass(frozen=True, eq=False)
class BasisBlock:
    """All knots of one subset, sorted lexicographically, shape (k, |s|)."""

    subset: int
    knots: np.ndarray

    @property
    def axes(self) -> tuple[int, ...]:
        return subset_axes(self.subset)

    def __len__(self) -> int:
        return self.knots.shape[0]


@dataclass(frozen=True, eq=False)
class KnotBasis:
    dim: int
    blocks: tuple[BasisBlock, ...]
    source_n: int

    def __len__(self) -> int:
        return sum(len(b) for b in self.blocks)

    def functions(self) -> list[KnotBasisFunction]:
        return [
            KnotBasisFunction(b.subset, tuple(float(v) for v in row))
            for b in self.blocks
            for row in b.knots
        ]

    def offsets(self) -> np.ndarray:
        return np.cumsum([0] + [len(b) for b in self.blocks])

    def design(self, X) -> "DesignOperator":
        return DesignOperator(self, X)

    def knot_grid(self) -> tuple[np.ndarray, ...]:
        """Per axis: 0 plus every knot coordinate used on that axis."""
        axes = [[np.zeros(1)] for _ in range(self.dim)]
        for b in self.blocks:
            for k, j in enumerate(b.axes):
                axes[j].append(b.knots[:, k])
        return tuple(np.unique(np.concatenate(a)) for a in axes)

    @classmethod
    def from_functions(cls, dim: int, functions: Sequence[KnotBasisFunction], source_n: int = 0):
        """Canonical basis from an arbitrary list; returns (basis, permutation).

        ``permutation[i]`` is the position in the canonical basis of
        ``functions[i]``.  Duplicates are rejected.
        """
        by_subset: dict[int, list[tuple[int, tuple[float, ...]]]] = {}
        for i, fn in enumerate(functions):
            if not 0 < fn.subset < (1 << dim):
                raise ValueError(f"subset {fn.subset} out of range for dimension {dim}")
            if len(fn.knot) != len(subset_axes(fn.subset)):
                raise ValueError("knot length does not match subset size")
            by_subset.setdefault(fn.subset, []).append((i, fn.knot))
        blocks = []
        perm = np.empty(len(functions), dtype=np.int64)
        offset = 0
        for bits in sorted(by_subset):
            entries = by_subset[bits]
            knots = np.array([k for _, k in entries], dtype=float)
            uniq, inverse = np.unique(knots, axis=0, return_inverse=True)
            if len(uniq) != len(knots):
                raise ValueError("duplicate basis functions")
            for (i, _), pos in zip(entries, np.ravel(inverse)):
                perm[i] = offset + int(pos)
            blocks.append(BasisBlock(bits, uniq))
            offset += len(uniq)
        return cls(dim, tuple(blocks), source_n), perm


def _check_points(X, dim: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if dim == 1 else X[None, :]
    if X.ndim != 2:
        raise ValueError("points must be a 2-d array (n, d)")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"expected dimension {dim}, got {X.shape[1]}")
    if not np.all(np.isfinite(X)) or np.any(X < 0.0) or np.any(X > 1.0):
        raise DomainError("all coordinates must lie in [0, 1]")
    return X


def generate_basis(X) -> KnotBasis:
    """Indicator basis with knots at the observed points, per nonempty subset.

    Knots with a zero coordinate are dropped: ``1{x_j >= 0}`` is identically
    one, so such a function duplicates a lower-order one (or the intercept).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise EmptyData("cannot build a basis from zero observations")
    X = _check_points(X)
    n, d = X.shape
    blocks = []
    for bits in nonempty_subsets(d):
        axes = list(subset_axes(bits))
        knots = X[:, axes]
        knots = knots[np.all(knots > 0.0, axis=1)]
        if len(knots) == 0:
            continue
        blocks.append(BasisBlock(bits, np.unique(knots, axis=0)))
    return KnotBasis(d, tuple(blocks), n)


def basis_count_bound(n: int, d: int) -> float:
    return (n * math.e / d) ** d


# ---------------------------------------------------------------------------
# design operators
# ---------------------------------------------------------------------------

class _Block1D:
    def __init__(self, knots: np.ndarray, x: np.ndarray):
        self.k = knots.shape[0]
        self.pos = np.searchsorted(knots[:, 0], x, side="right")

    def matvec(self, coef):
        c = np.empty(self.k + 1)
        c[0] = 0.0
        np.cumsum(coef, out=c[1:])
        return c[self.pos]

    def rmatvec(self, r):
        acc = np.bincount(self.pos, weights=r, minlength=self.k + 1)
        suffix = np.cumsum(acc[::-1])[::-1]
        return suffix[1:]


class _Block2D:
    def __init__(self, knots: np.ndarray, x: np.ndarray):
        self.knot_a = np.ascontiguousarray(knots[:, 0])
        ub = np.unique(knots[:, 1])
        self.nb = len(ub)
        self.knot_rb = np.searchsorted(ub, knots[:, 1]).astype(np.int64)
        self.pt_x = np.ascontiguousarray(x[:, 0])
        self.pt_order = np.argsort(self.pt_x, kind="stable").astype(np.int64)
        self.pt_qb = np.searchsorted(ub, x[:, 1], side="right").astype(np.int64)
        self.k = knots.shape[0]
        self.m = x.shape[0]

    def matvec(self, coef):
        out = np.empty(self.m)
        _kernels.dominance_matvec(
            self.knot_a, self.knot_rb, np.ascontiguousarray(coef, dtype=float),
            self.pt_order, self.pt_x, self.pt_qb, self.nb, out,
        )
        return out

    def rmatvec(self, r):
        out = np.empty(self.k)
        _kernels.dominance_rmatvec(
            self.knot_a, self.knot_rb, np.ascontiguousarray(r, dtype=float),
            self.pt_order, self.pt_x, self.pt_qb, self.nb, out,
        )
        return out


class _BlockDense:
    def __init__(self, knots: np.ndarray, x: np.ndarray):
        self.knots = knots
        self.x = x
        self.matrix = None
        if knots.shape[0] * x.shape[0] <= _DENSE_LIMIT:
            self.matrix = self._rows(slice(None)).astype(float)

    def _rows(self, sl):
        return np.all(self.x[sl, None, :] >= self.knots[None, :, :], axis=2)

    def matvec(self, coef):
        if self.matrix is not None:
            return self.matrix @ coef
        out = np.empty(self.x.shape[0])
        step = max(1, _DENSE_LIMIT // max(1, self.knots.shape[0]))
        for start in range(0, self.x.shape[0], step):
            sl = slice(start, start + step)
            out[sl] = self._rows(sl) @ coef
        return out

    def rmatvec(self, r):
        if self.matrix is not None:
            return self.matrix.T @ r
        out = np.zeros(self.knots.shape[0])
        step = max(1, _DENSE_LIMIT // max(1, self.knots.shape[0]))
        for start in range(0, self.x.shape[0], step):
            sl = slice(start, start + step)
            out += r[sl] @ self._rows(sl)
        return out


class DesignOperator:
    """Linear map from (intercept, coefficients) to values at fixed points.

    Column 0 is the constant function; the remaining columns follow the
    basis order.  ``matvec``/``rmatvec`` never materialize the full matrix
    for subsets of size one or two.
    """

    def __init__(self, basis: KnotBasis, X):
        X = _check_points(X, basis.dim)
        self.basis = basis
        self.m = X.shape[0]
        self.p = len(basis)
        self.offsets = basis.offsets()
        self._blocks = []
        for b in basis.blocks:
            x = X[:, list(b.axes)]
            if len(b.axes) == 1:
                self._blocks.append(_Block1D(b.knots, x[:, 0]))
            elif len(b.axes) == 2:
                self._blocks.append(_Block2D(b.knots, x))
            else:
                self._blocks.append(_BlockDense(b.knots, x))

    @property
    def shape(self) -> tuple[int, int]:
        return self.m, self.p + 1

    def matvec(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        out = np.full(self.m, w[0])
        for blk, lo, hi in zip(self._blocks, self.offsets[:-1], self.offsets[1:]):
            out += blk.matvec(w[1 + lo:1 + hi])
        return out

    def rmatvec(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.empty(self.p + 1)
        out[0] = r.sum()
        for blk, lo, hi in zip(self._blocks, self.offsets[:-1], self.offsets[1:]):
            out[1 + lo:1 + hi] = blk.rmatvec(r)
        return out

    def dense(self) -> np.ndarray:
        """Materialized matrix (small problems and tests only)."""
        eye = np.eye(self.p + 1)
        return np.column_stack([self.matvec(eye[:, j]) for j in range(self.p + 1)])


# ---------------------------------------------------------------------------
# fitted functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FittedFunction:
    intercept: float
    coefficients: np.ndarray
    basis: KnotBasis

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float).ravel()
        if coef.shape[0] != len(self.basis):
            raise ValueError("one coefficient per basis function is required")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def dim(self) -> int:
        return self.basis.dim

    @classmethod
    def from_vector(cls, w, basis: KnotBasis) -> "FittedFunction":
        w = np.asarray(w, dtype=float)
        return cls(float(w[0]), w[1:], basis)

    def vector(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.coefficients])

    def predict(self, x) -> np.ndarray | float:
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1 and not (self.dim == 1 and arr.shape[0] != 1)
        pts = arr.reshape(1, -1) if single else arr
        out = DesignOperator(self.basis, pts).matvec(self.vector())
        return float(out[0]) if single else out

    __call__ = predict

    def pruned(self) -> "FittedFunction":
        """Same function on the basis functions with nonzero coefficients only."""
        keep = self.coefficients != 0
        blocks = []
        for blk, lo in zip(self.basis.blocks, self.basis.offsets()[:-1]):
            mask = keep[lo:lo + len(blk)]
            if mask.any():
                blocks.append(BasisBlock(blk.subset, blk.knots[mask]))
        basis = KnotBasis(self.dim, tuple(blocks), self.basis.source_n)
        return FittedFunction(self.intercept, self.coefficients[keep], basis)

    def render(self) -> GridFunction:
        """Exact GridFunction on the knot grid."""
        grid = self.basis.knot_grid()
        shape = tuple(len(g) for g in grid)
        values = np.full(shape, self.intercept)
        coef = self.coefficients
        for blk, lo in zip(self.basis.blocks, self.basis.offsets()[:-1]):
            axes = blk.axes
            face_shape = tuple(shape[j] for j in axes)
            face = np.zeros(face_shape)
            idx = tuple(np.searchsorted(grid[j], blk.knots[:, k]) for k, j in enumerate(axes))
            np.add.at(face, idx, coef[lo:lo + len(blk)])
            for k in range(len(axes)):
                face = np.cumsum(face, axis=k)
            values = values + face.reshape([shape[j] if j in axes else 1 for j in range(self.dim)])
        return GridFunction(grid, values)

    def to_dict(self) -> dict:
        entries = []
        for fn, c in zip(self.basis.functions(), self.coefficients):
            entries.append({"subset_bits": fn.subset, "knot": list(fn.knot), "coef": float(c)})
        return {"dim": self.dim, "source_n": self.basis.source_n, "intercept": self.intercept, "entries": entries}

    @classmethod
    def from_dict(cls, data: dict) -> "FittedFunction":
        dim = int(data["dim"])
        fns = [KnotBasisFunction(int(e["subset_bits"]), tuple(float(v) for v in e["knot"])) for e in data["entries"]]
        basis, perm = KnotBasis.from_functions(dim, fns, int(data.get("source_n", 0)))
        coef = np.zeros(len(fns))
        coef[perm] = [float(e["coef"]) for e in data["entries"]]
        return cls(float(data["intercept"]), coef, basis)


def fit_svn(fit: FittedFunction) -> float:
    """Sectional variation norm of a fit with distinct (subset, knot) pairs."""
    return abs(fit.intercept) + float(np.sum(np.abs(fit.coefficients)))


def predict(fit: FittedFunction, x):
    return fit.predict(x)
