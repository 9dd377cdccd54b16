import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cadlag_erm.basis import (
    FittedFunction,
    KnotBasis,
    KnotBasisFunction,
    basis_count_bound,
    fit_svn,
    generate_basis,
    predict,
)
from cadlag_erm.errors import DomainError, EmptyData
from cadlag_erm.svn import svn_exact


def dense_design(basis, X):
    cols = [np.ones(len(X))] + [fn(X) for fn in basis.functions()]
    return np.column_stack(cols)


def random_fit(rng, n, d):
    X = np.round(rng.uniform(0.01, 1.0, size=(n, d)), 2)
    basis = generate_basis(X)
    w = rng.normal(size=len(basis) + 1) * (rng.uniform(size=len(basis) + 1) < 0.5)
    return FittedFunction.from_vector(w, basis), X


class TestGenerateBasis:
    def test_single_point(self):
        b = generate_basis([[0.4]])
        assert len(b) == 1
        (fn,) = b.functions()
        assert fn == KnotBasisFunction(1, (0.4,))

    def test_three_points_two_dims(self):
        b = generate_basis([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
        assert len(b) == 9
        assert len(b) <= (3 * math.e / 2) ** 2

    def test_shared_coordinate(self):
        b = generate_basis([[0.1, 0.2], [0.1, 0.4], [0.5, 0.6]])
        assert len(b) == 8

    def test_zero_coordinates_dropped(self):
        b = generate_basis([[0.0, 0.5]])
        assert [fn.subset for fn in b.functions()] == [0b10]

    def test_errors(self):
        with pytest.raises(EmptyData):
            generate_basis(np.zeros((0, 2)))
        with pytest.raises(DomainError):
            generate_basis([[0.5, 1.2]])
        with pytest.raises(DomainError):
            generate_basis([[-0.1]])

    def test_no_duplicates(self):
        X = np.round(np.random.default_rng(0).uniform(size=(40, 3)), 1)
        fns = generate_basis(X).functions()
        assert len(set(fns)) == len(fns)

    def test_monotone_growth(self):
        rng = np.random.default_rng(1)
        X = np.round(rng.uniform(size=(20, 2)), 2)
        small = set(generate_basis(X[:10]).functions())
        assert small <= set(generate_basis(X).functions())

    @pytest.mark.parametrize("d", [1, 2, 3, 4])
    def test_count_bound(self, d):
        rng = np.random.default_rng(d)
        start = d if d <= 2 else d + 1
        for n in range(start, 40):
            X = rng.uniform(size=(n, d))
            assert len(generate_basis(X)) <= basis_count_bound(n, d)

    def test_count_bound_fails_at_n_equal_d(self):
        # distinct coordinates give n * (2^d - 1) functions, which beats (ne/d)^d at n = d = 3
        X = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.8, 0.9]])
        assert len(generate_basis(X)) == 21
        assert 21 > basis_count_bound(3, 3)


class TestDesignOperator:
    @pytest.mark.parametrize("d", [1, 2, 3])
    @pytest.mark.parametrize("seed", range(3))
    def test_against_dense(self, d, seed):
        rng = np.random.default_rng(seed)
        X = np.round(rng.uniform(size=(25, d)), 1)
        basis = generate_basis(X)
        Z = np.round(rng.uniform(size=(30, d)), 1)
        A = dense_design(basis, Z)
        op = basis.design(Z)
        w = rng.normal(size=op.shape[1])
        r = rng.normal(size=op.shape[0])
        assert np.allclose(op.matvec(w), A @ w, atol=1e-12)
        assert np.allclose(op.rmatvec(r), A.T @ r, atol=1e-12)
        assert np.array_equal(op.dense(), A)


class TestPredict:
    def test_zero_coefficients(self):
        basis = generate_basis([[0.3, 0.7]])
        fit = FittedFunction(0.4, np.zeros(len(basis)), basis)
        assert np.all(fit.predict(np.random.default_rng(0).uniform(size=(10, 2))) == 0.4)

    def test_right_continuity(self):
        fit = FittedFunction(0.0, [1.0], generate_basis([[0.5]]))
        assert predict(fit, [np.nextafter(0.5, 0)]) == 0.0
        assert predict(fit, [0.5]) == 1.0

    def test_domain(self):
        fit = FittedFunction(0.0, [1.0], generate_basis([[0.5]]))
        with pytest.raises(DomainError):
            fit.predict([1.5])

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_matches_rendering(self, d):
        rng = np.random.default_rng(10 + d)
        fit, _ = random_fit(rng, 15, d)
        g = fit.render()
        Z = rng.uniform(size=(1000, d))
        assert np.allclose(fit.predict(Z), g(Z), atol=1e-12)

    def test_persistence_exact(self):
        rng = np.random.default_rng(3)
        fit, X = random_fit(rng, 20, 2)
        back = FittedFunction.from_dict(json.loads(json.dumps(fit.to_dict())))
        Z = rng.uniform(size=(200, 2))
        assert np.array_equal(back.predict(Z), fit.predict(Z))

    def test_from_functions_reorders(self):
        fns = [KnotBasisFunction(1, (0.5,)), KnotBasisFunction(1, (0.2,))]
        basis, perm = KnotBasis.from_functions(1, fns)
        assert list(perm) == [1, 0]
        with pytest.raises(ValueError):
            KnotBasis.from_functions(1, fns + fns)


class TestFitSvn:
    def test_example(self):
        basis = generate_basis([[0.3, 0.6]])
        fit = FittedFunction(0.25, [0.5, -0.25, 0.0], basis)
        assert fit_svn(fit) == 1.0
        assert svn_exact(fit.render()) == pytest.approx(1.0, abs=1e-12)

    def test_zero(self):
        basis = generate_basis([[0.3]])
        assert fit_svn(FittedFunction(0.0, [0.0], basis)) == 0.0

    @pytest.mark.parametrize("seed", range(50))
    def test_l1_identity(self, seed):
        rng = np.random.default_rng(seed)
        fit, _ = random_fit(rng, int(rng.integers(1, 12)), int(rng.integers(1, 4)))
        assert fit_svn(fit) == pytest.approx(svn_exact(fit.render()), abs=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_l1_identity_property(self, seed):
        rng = np.random.default_rng(seed)
        fit, _ = random_fit(rng, 6, 2)
        assert fit_svn(fit) == pytest.approx(svn_exact(fit.render()), abs=1e-10)
