import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cadlag_erm.basis import fit_svn
from cadlag_erm.errors import EmptyData, NonFinite
from cadlag_erm.losses import make_loss
from cadlag_erm.solver import (
    SieveSchedule,
    SolveOptions,
    StepRule,
    fit_erm,
    kkt_residual,
    project_l1_ball,
    sieve_radius,
)
from oracles import coefficient_enumeration, staircase_dp, tiny_instance


def sort_threshold_oracle(v, r):
    """Bisection on the soft-threshold level, independent of the sort-based code."""
    if np.abs(v).sum() <= r:
        return v
    lo, hi = 0.0, np.abs(v).max()
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        if np.maximum(np.abs(v) - tau, 0).sum() > r:
            lo = tau
        else:
            hi = tau
    return np.sign(v) * np.maximum(np.abs(v) - hi, 0)


class TestSieveRadius:
    def test_constant(self):
        assert sieve_radius(SieveSchedule("constant", 2.0), 10**6) == 2.0

    def test_power(self):
        assert sieve_radius(SieveSchedule("power", 1.0, 0.1), 1024) == pytest.approx(2.0, abs=1e-12)

    def test_monotone(self):
        s = SieveSchedule("power", 0.7, 0.25)
        r = [sieve_radius(s, n) for n in range(1, 100_001)]
        assert all(a <= b for a, b in zip(r, r[1:]))

    def test_invalid(self):
        with pytest.raises(ValueError):
            SieveSchedule("power", 1.0, 0.0)
        with pytest.raises(ValueError):
            SieveSchedule("linear", 1.0)
        with pytest.raises(ValueError):
            sieve_radius(SieveSchedule(), 0)


class TestProjection:
    def test_feasible_unchanged(self):
        assert np.array_equal(project_l1_ball([0.3, -0.2], 1.0), [0.3, -0.2])

    def test_axis(self):
        assert np.array_equal(project_l1_ball([2.0, 0.0], 1.0), [1.0, 0.0])

    def test_soft_threshold(self):
        assert np.allclose(project_l1_ball([0.6, -0.6], 1.0), [0.5, -0.5], atol=1e-15)

    def test_zero_radius(self):
        assert np.array_equal(project_l1_ball([0.6, -0.6], 0.0), [0.0, 0.0])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(0.01, 5))
    def test_matches_oracle_and_idempotent(self, v, r):
        v = np.array(v)
        w = project_l1_ball(v, r)
        assert np.abs(w).sum() <= r * (1 + 1e-12) + 1e-12
        assert np.allclose(w, sort_threshold_oracle(v, r), atol=1e-9)
        assert np.allclose(project_l1_ball(w, r), w, atol=1e-12)

    def test_variational_inequality(self):
        # <v - w, z - w> <= 0 for every feasible z
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = rng.normal(size=8) * 2
            w = project_l1_ball(v, 1.0)
            for _ in range(20):
                z = project_l1_ball(rng.normal(size=8), 1.0)
                assert (v - w) @ (z - w) <= 1e-10


class TestFitErm:
    def test_constant_data(self):
        X = np.random.default_rng(0).uniform(size=(40, 1))
        Y = np.full(40, 0.7)
        rep = fit_erm((X, Y), make_loss("square", 1.0), 1.0)
        assert rep.final_objective < 1e-8
        assert np.allclose(rep.fit.predict(X), 0.7, atol=1e-5)

    def test_zero_radius(self):
        X = np.random.default_rng(0).uniform(size=(10, 2))
        rep = fit_erm((X, np.ones(10)), make_loss("square"), 0.0)
        assert fit_svn(rep.fit) == 0.0
        assert np.all(rep.fit.predict(X) == 0.0)

    def test_errors(self):
        with pytest.raises(EmptyData):
            fit_erm((np.zeros((0, 1)), np.zeros(0)), make_loss("square"), 1.0)
        with pytest.raises(NonFinite):
            fit_erm((np.full((3, 1), 0.5), np.array([1.0, np.inf, 0.0])), make_loss("square"), 1.0)

    @pytest.mark.parametrize("family", ["square", "logistic"])
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_grid_oracle(self, family, seed):
        rng = np.random.default_rng(seed)
        X, Y, r = tiny_instance(rng, family)
        loss = make_loss(family, 3.0)
        rep = fit_erm((X, Y), loss, r)
        assert rep.final_objective <= staircase_dp(X, Y, loss, r) + 1e-3
        assert fit_svn(rep.fit) <= r + 1e-9
        assert rep.kkt_residual <= 10 * 1e-7 or not rep.converged

    def test_dp_agrees_with_enumeration(self):
        rng = np.random.default_rng(3)
        loss = make_loss("square")
        for _ in range(5):
            xs = np.array([0.2, 0.5, 0.8])
            X = rng.choice(xs, 20)
            Y = rng.normal(size=20)
            r = 1.0
            assert staircase_dp(X, Y, loss, r, h=0.05) == pytest.approx(
                coefficient_enumeration(X, Y, loss, r, h=0.05), abs=1e-12
            )

    def test_monotone_history(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(size=(100, 2))
        Y = np.sin(4 * X[:, 0]) + rng.normal(scale=0.3, size=100)
        rep = fit_erm((X, Y), make_loss("square", 2.0), 1.5, SolveOptions(record_history=True))
        h = np.array(rep.history)
        assert np.all(np.diff(h) <= 0)

    def test_nesting(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(size=(80, 2))
        Y = (X[:, 0] > 0.5) + rng.normal(scale=0.3, size=80)
        objs = [fit_erm((X, Y), make_loss("square", 2.0), r).final_objective for r in (0.25, 0.5, 1.0, 2.0)]
        assert all(a >= b - 1e-8 for a, b in zip(objs, objs[1:]))

    def test_step_rule_validation(self):
        with pytest.raises(ValueError):
            StepRule(shrink=1.5)
        with pytest.raises(ValueError):
            SolveOptions(max_iters=0)

    def test_max_iters_reported(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(size=(60, 1))
        rep = fit_erm((X, rng.normal(size=60)), make_loss("square"), 2.0, SolveOptions(max_iters=3))
        assert rep.status == "max_iters" and rep.iterations == 3


class TestKkt:
    def _solve(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(size=(60, 1))
        Y = 2 * (X[:, 0] > 0.3) + rng.normal(scale=0.2, size=60)
        loss = make_loss("square", 3.0)
        return X, Y, loss, fit_erm((X, Y), loss, 1.0)

    def test_converged_small(self):
        X, Y, loss, rep = self._solve()
        assert rep.kkt_residual <= 1e-6
        assert kkt_residual(rep.fit, (X, Y), loss, 1.0) == pytest.approx(rep.kkt_residual)

    def test_perturbation_increases(self):
        X, Y, loss, rep = self._solve()
        w = rep.fit.vector().copy()
        w[1] += 0.1  # leftmost knot, inactive at the optimum
        from cadlag_erm.basis import FittedFunction

        bumped = FittedFunction.from_vector(w, rep.fit.basis)
        assert kkt_residual(bumped, (X, Y), loss, 1.0) > rep.kkt_residual

    def test_interior_is_gradient_norm(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(size=(30, 1))
        Y = rng.normal(size=30)
        loss = make_loss("square", 3.0)
        rep = fit_erm((X, Y), loss, 1e3)
        assert fit_svn(rep.fit) < 1e3
        assert kkt_residual(rep.fit, (X, Y), loss, 1e3) <= 1e-5
