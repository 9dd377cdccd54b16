import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cadlag_erm.errors import DegenerateScale, DomainError, NormBudgetExceeded
from cadlag_erm.svn import (
    GridFunction,
    MixtureComponent,
    MixtureRepresentation,
    decompose,
    nonempty_subsets,
    point_mass_cdf,
    random_grid_function,
    random_mixture,
    section_measure,
    subset_axes,
    sup_norm,
    svn_exact,
    synthesize,
)


def brute_force_svn(f):
    """Inclusion-exclusion over every face cell, evaluating f pointwise."""
    d = f.dim
    total = abs(f(np.zeros(d)))
    for bits in nonempty_subsets(d):
        axes = subset_axes(bits)
        for idx in itertools.product(*[range(1, len(f.grid[j])) for j in axes]):
            diff = 0.0
            for e in itertools.product((0, 1), repeat=len(axes)):
                x = np.zeros(d)
                for k, j in enumerate(axes):
                    x[j] = f.grid[j][idx[k] - 1 + e[k]]
                sign = (-1) ** (len(axes) - sum(e))
                diff += sign * f(x)
            total += abs(diff)
    return total


class TestSvnExact:
    def test_constant(self):
        assert svn_exact(GridFunction.constant(-2.5, 3)) == 2.5

    def test_indicator_quadrant(self):
        f = GridFunction.indicator([0.5, 0.5])
        assert svn_exact(f) == pytest.approx(1.0, abs=1e-12)
        sm = section_measure(f, 0b11)
        assert sm.atoms() == [((0.5, 0.5), 1.0)]
        assert section_measure(f, 0b01).total_variation() == 0.0

    def test_additive_ramp(self):
        grid = [np.linspace(0, 1, 11)] * 2
        f = GridFunction.from_callable(lambda x: x[0] + x[1], grid)
        assert svn_exact(f) == pytest.approx(2.0, abs=1e-12)
        assert brute_force_svn(f) == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        f = random_grid_function(rng, int(rng.integers(1, 4)), max_points=5)
        assert svn_exact(f) == pytest.approx(brute_force_svn(f), abs=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_refinement_invariance(self, seed):
        rng = np.random.default_rng(100 + seed)
        f = random_grid_function(rng, 2)
        g = f.refine(int(rng.integers(0, 2)), float(rng.uniform(0.001, 0.999)))
        assert g.equals(f)
        assert svn_exact(g) == pytest.approx(svn_exact(f), abs=1e-12)

    def test_triangle_and_homogeneity(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            f = random_grid_function(rng, 2)
            g = random_grid_function(rng, 2)
            c = float(rng.normal())
            assert svn_exact(f + g) <= svn_exact(f) + svn_exact(g) + 1e-12
            assert svn_exact(c * f) == pytest.approx(abs(c) * svn_exact(f), rel=1e-12, abs=1e-12)


class TestSupNorm:
    def test_constant(self):
        assert sup_norm(GridFunction.constant(-3.0, 2)) == 3.0

    def test_indicator(self):
        f = GridFunction.indicator([0.5, 0.5])
        assert sup_norm(f) == 1.0 <= svn_exact(f)

    def test_mixtures_with_budget_two(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            f = synthesize(random_mixture(rng, int(rng.integers(1, 4)), 2.0))
            assert sup_norm(f) <= 2.0 + 1e-12
            assert sup_norm(f) <= svn_exact(f) + 1e-12

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_domination_property(self, seed, dim):
        f = random_grid_function(np.random.default_rng(seed), dim, max_points=5)
        assert sup_norm(f) <= svn_exact(f) + 1e-12


class TestDecompose:
    def test_zero(self):
        rep = decompose(GridFunction.constant(0.0, 2), 1.0)
        assert rep.f0 == 0.0
        assert np.all(rep.alphas() == 0.0)

    def test_indicator(self):
        rep = decompose(GridFunction.indicator([0.5, 0.5]), 1.0)
        live = [c for c in rep.components if c.alpha > 0]
        assert len(live) == 1
        (c,) = live
        assert (c.subset, c.sign, c.alpha) == (0b11, 1, 1.0)
        # point mass at (0.5, 0.5)
        assert c.cdf(np.array([0.5, 0.5])) == 1.0
        assert c.cdf(np.array([0.49, 0.99])) == 0.0
        assert c.cdf(np.array([0.99, 0.49])) == 0.0

    def test_half_budget(self):
        rng = np.random.default_rng(3)
        f = random_grid_function(rng, 2)
        f = f - float(f.values[0, 0])
        v = svn_exact(f)
        rep = decompose(f, 2 * v)
        # masses add to v = (M - |f0|) * sum(alpha)
        assert rep.alphas().sum() == pytest.approx(0.5, abs=1e-12)

    def test_errors(self):
        f = GridFunction.indicator([0.3])
        with pytest.raises(NormBudgetExceeded):
            decompose(f, 0.5)
        g = f + 1.0  # f(0)=1, norm 2
        with pytest.raises(NormBudgetExceeded):
            decompose(g, 1.0)
        h = GridFunction(([0.0, 0.5],), [1.0, 1.0])
        assert decompose(h, 1.0).f0 == 1.0  # constant: degenerate scale is fine
        k = GridFunction(([0.0, 0.5],), [1.0, 0.0])
        rep = decompose(k, 2.0)
        assert synthesize(rep).equals(k)

    @pytest.mark.parametrize("seed", range(30))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        f = random_grid_function(rng, int(rng.integers(1, 4)), max_points=6)
        M = svn_exact(f) * float(rng.uniform(1.0, 3.0))
        rep = decompose(f, M)
        rep.validate()
        g = synthesize(rep)
        assert np.max(np.abs(g.resample(f.grid).values - f.values)) <= 1e-12


def test_degenerate_scale():
    k = GridFunction(([0.0, 0.5],), [1.0, 0.0])  # f(0)=1, norm 2
    # |f0| = M = 1 with a nonconstant f cannot be represented; norm check fires first
    with pytest.raises(NormBudgetExceeded):
        decompose(k, 1.0)
    # within the exactness tolerance of the budget, but |f0| == M
    nearly = GridFunction(([0.0, 0.5],), [1.0, 1.0 + 4e-13])
    with pytest.raises(DegenerateScale):
        decompose(nearly, 1.0)
    # constants with |f0| == M are accepted
    c = GridFunction.constant(1.5, 2)
    assert svn_exact(synthesize(decompose(c, 1.5))) == 1.5


class TestSynthesize:
    def test_all_zero_alphas(self):
        grid = (np.array([0.0, 0.5]),)
        comps = (MixtureComponent(1, 1, 0.0, point_mass_cdf(grid, (1,))),)
        f = synthesize(MixtureRepresentation(1, 0.7, 2.0, comps))
        assert np.all(f.values == 0.7)

    def test_point_mass_gives_indicator(self):
        grid = (np.array([0.0, 0.25, 0.6]), np.array([0.0, 0.4]))
        cdf = point_mass_cdf(grid, (2, 1))
        f = synthesize(MixtureRepresentation(2, 0.0, 1.0, (MixtureComponent(0b11, 1, 1.0, cdf),)))
        assert f.equals(GridFunction.indicator([0.6, 0.4]))

    def test_cancellation(self):
        grid = (np.array([0.0, 0.3]),)
        cdf = point_mass_cdf(grid, (1,))
        rep = MixtureRepresentation(
            1, 0.2, 1.0, (MixtureComponent(1, 1, 0.5, cdf), MixtureComponent(1, -1, 0.5, cdf))
        )
        f = synthesize(rep)
        assert np.allclose(f.values, 0.2)
        assert svn_exact(f) == pytest.approx(0.2) and svn_exact(f) < rep.M

    def test_budget(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            rep = random_mixture(rng, int(rng.integers(1, 4)), float(rng.uniform(0, 3)))
            rep.validate()
            assert svn_exact(synthesize(rep)) <= rep.M + 1e-12


class TestGridFunction:
    def test_json_round_trip(self):
        f = random_grid_function(np.random.default_rng(0), 3)
        g = GridFunction.from_json(f.to_json())
        assert all(np.array_equal(a, b) for a, b in zip(f.grid, g.grid))
        assert np.array_equal(f.values, g.values)

    def test_evaluation_right_continuous(self):
        f = GridFunction(([0.0, 0.5],), [0.0, 1.0])
        assert f(np.array([0.5])) == 1.0
        assert f(np.array([np.nextafter(0.5, 0)])) == 0.0
        assert f(np.array([1.0])) == 1.0

    def test_domain(self):
        f = GridFunction.constant(1.0, 2)
        with pytest.raises(DomainError):
            f(np.array([0.5, 1.5]))

    def test_invalid_grid(self):
        with pytest.raises(ValueError):
            GridFunction(([0.1, 0.5],), [0.0, 1.0])
        with pytest.raises(ValueError):
            GridFunction(([0.0, 0.5, 0.5],), [0.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            GridFunction(([0.0, 0.5],), [0.0, 1.0, 2.0])
