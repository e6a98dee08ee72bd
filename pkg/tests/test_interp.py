import numpy as np
import pytest

from edreg.core import KernelSpec
from edreg.interp import (
    CpdSolution,
    DuplicatePoints,
    NotUnisolvent,
    PolynomialBasis,
    check_unisolvent,
    evaluate_interpolant,
    induced_metric,
    solve_exact_cpd,
    solve_ridge_cpd,
    solve_ridge_pd,
)
from edreg.kernels import gram

ED = KernelSpec.energy_distance()
TPS = KernelSpec.ms_spline(2, 0.0)  # thin plate spline in d = 2, degree 1


class TestPolynomialBasis:
    @pytest.mark.parametrize("deg,d,l", [(0, 3, 1), (1, 2, 3), (2, 2, 6), (3, 3, 20)])
    def test_dimension(self, deg, d, l):
        basis = PolynomialBasis(deg, d)
        assert basis.size == l
        assert basis.evaluate(np.ones((5, d))).shape == (5, l)
        assert len({tuple(e) for e in basis.exponents}) == l


class TestUnisolvent:
    def test_examples(self, rng):
        assert check_unisolvent(rng.normal(size=(1, 3)), 0)
        assert not check_unisolvent(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), 1)
        assert check_unisolvent(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), 1)


class TestExactCpd:
    def test_two_point_closed_form(self):
        sol = solve_exact_cpd(ED, np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), 0)
        np.testing.assert_allclose(sol.gamma[:, 0], [-0.5, 0.5])
        np.testing.assert_allclose(sol.alpha[:, 0], [0.5])
        np.testing.assert_allclose(sol.semi_norm_sq, [0.5])

    def test_general_two_point_formula(self):
        y1, y2, r = 0.3, -1.1, 2.5
        sol = solve_exact_cpd(ED, np.array([[0.0], [r]]), np.array([y1, y2]), 0)
        assert sol.gamma[0, 0] == pytest.approx((y1 - y2) / (2 * r))
        assert sol.alpha[0, 0] == pytest.approx((y1 + y2) / 2)
        assert sol.semi_norm_sq[0] == pytest.approx((y1 - y2) ** 2 / (2 * r))

    def test_constant_data(self, rng):
        sol = solve_exact_cpd(ED, rng.normal(size=(10, 2)), np.full(10, 3.0), 0)
        np.testing.assert_allclose(sol.gamma, 0.0, atol=1e-12)
        np.testing.assert_allclose(sol.alpha, [[3.0]])
        assert abs(sol.semi_norm_sq[0]) <= 1e-10

    @pytest.mark.parametrize("spec,deg", [(ED, 0), (TPS, 1), (KernelSpec.gaussian(0.7), -1)])
    def test_reproduces_data(self, rng, spec, deg):
        X = rng.uniform(-1, 1, (20, 2))
        Y = rng.normal(size=(20, 2))
        sol = solve_exact_cpd(spec, X, Y, deg)
        np.testing.assert_allclose(evaluate_interpolant(spec, X, sol, deg, X), Y, atol=1e-8 * np.linalg.norm(Y))
        if deg >= 0:
            P = PolynomialBasis(deg, 2).evaluate(X)
            np.testing.assert_allclose(P.T @ sol.gamma, 0.0, atol=1e-8 * np.linalg.norm(Y))

    def test_rejects_duplicates(self):
        with pytest.raises(DuplicatePoints):
            solve_exact_cpd(ED, np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]]), np.zeros(3), 0)

    def test_rejects_non_unisolvent(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        with pytest.raises(NotUnisolvent):
            solve_exact_cpd(TPS, X, np.zeros(3), 1)

    def test_minimal_semi_norm(self, rng):
        # add constraint-respecting expansions on a superset of X; the result still
        # interpolates the data but never has a smaller semi-norm
        X = rng.uniform(-1, 1, (15, 2))
        Y = rng.normal(size=15)
        sol = solve_exact_cpd(ED, X, Y, 0)
        extra = rng.uniform(-1, 1, (10, 2))
        Z = np.vstack([X, extra])
        K = gram(ED, Z)
        for _ in range(50):
            h = np.zeros(25)
            h[15:] = rng.normal(size=10)
            # data-site coefficients and a constant shift keep the data and the constraint
            M = np.block([[K[:15, :15], np.ones((15, 1))], [np.ones((1, 15)), np.zeros((1, 1))]])
            rhs = -np.concatenate([K[:15, 15:] @ h[15:], [h[15:].sum()]])
            sol_h = np.linalg.solve(M, rhs)
            h[:15] = sol_h[:15]
            alt = np.concatenate([sol.gamma[:, 0], np.zeros(10)]) + h
            np.testing.assert_allclose((K @ alt)[:15] + sol.alpha[0, 0] + sol_h[15], Y, atol=1e-8)
            assert abs(alt.sum()) < 1e-10
            assert alt @ K @ alt >= sol.semi_norm_sq[0] - 1e-9


class TestRidge:
    def test_pd_zero_lambda_interpolates(self, rng):
        spec = KernelSpec.gaussian(0.5)
        X = rng.uniform(-1, 1, (15, 2))
        Y = rng.normal(size=(15, 1))
        g = solve_ridge_pd(spec, X, Y, 0.0)
        np.testing.assert_allclose(gram(spec, X) @ g, Y, atol=1e-8 * np.linalg.norm(Y))

    def test_pd_large_lambda(self, rng):
        spec = KernelSpec.gaussian(0.5)
        X = rng.uniform(-1, 1, (10, 2))
        Y = rng.normal(size=(10, 1))
        g = solve_ridge_pd(spec, X, Y, 1e8)
        np.testing.assert_allclose(g, Y / 1e8, rtol=1e-6)

    def test_pd_two_points_by_hand(self):
        spec = KernelSpec.gaussian(1.0)
        X = np.array([[0.0], [1.0]])
        Y = np.array([1.0, 2.0])
        k = np.exp(-0.5)
        a = 1.0 + 0.3
        inv = np.array([[a, -k], [-k, a]]) / (a * a - k * k)
        np.testing.assert_allclose(solve_ridge_pd(spec, X, Y, 0.3)[:, 0], inv @ Y, rtol=1e-12)

    def test_cpd_continuity(self, rng):
        X = rng.uniform(-1, 1, (25, 2))
        Y = rng.normal(size=(25, 2))
        exact = solve_exact_cpd(ED, X, Y, 0)
        ridge = solve_ridge_cpd(ED, X, Y, 0, 1e-10)
        np.testing.assert_allclose(ridge.gamma, exact.gamma, rtol=1e-6, atol=1e-6 * np.abs(exact.gamma).max())
        np.testing.assert_allclose(ridge.alpha, exact.alpha, rtol=1e-6, atol=1e-6)

    def test_cpd_polynomial_data(self, rng):
        X = rng.uniform(-1, 1, (12, 2))
        Y = 1.0 + 2.0 * X[:, 0] - X[:, 1]
        sol = solve_ridge_cpd(TPS, X, Y, 1, 0.1)
        np.testing.assert_allclose(sol.gamma, 0.0, atol=1e-10)
        np.testing.assert_allclose(evaluate_interpolant(TPS, X, sol, 1, X)[:, 0], Y, atol=1e-10)

    def test_cpd_local_optimality(self, rng):
        X = rng.uniform(-1, 1, (15, 2))
        Y = rng.normal(size=15)
        lam = 0.05
        sol = solve_ridge_cpd(ED, X, Y, 0, lam)
        K = gram(ED, X)

        def objective(g, a):
            resid = K @ g + a - Y
            return resid @ resid / lam + g @ K @ g

        best = objective(sol.gamma[:, 0], sol.alpha[0, 0])
        for _ in range(10):
            dg = rng.normal(size=15)
            dg -= dg.mean()
            for eps in (1e-3, -1e-3):
                assert objective(sol.gamma[:, 0] + eps * dg, sol.alpha[0, 0]) >= best - 1e-12


class TestInducedMetric:
    def test_examples(self, rng):
        X = rng.uniform(-1, 1, (10, 2))
        Yp = 2.0 - 0.5 * X[:, 0] + X[:, 1]
        assert abs(induced_metric(TPS, X, Yp, 1)) <= 1e-10 * (Yp @ Yp)
        assert induced_metric(TPS, X, Yp, 1, lam_poly=1.0) == pytest.approx(Yp @ Yp, rel=1e-8)
        assert induced_metric(ED, np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), 0) == pytest.approx(0.5)

    def test_positive_off_null_space(self, rng):
        X = rng.uniform(-1, 1, (12, 2))
        for _ in range(50):
            Y = rng.normal(size=12)
            assert induced_metric(ED, X, Y, 0) > 0

    def test_scale_homogeneity(self, rng):
        X = rng.uniform(-1, 1, (20, 3))
        Y = rng.normal(size=20)
        r = 3.7
        assert induced_metric(ED, r * X, Y, 0) == pytest.approx(induced_metric(ED, X, Y, 0) / r, rel=1e-10)


class TestEvaluate:
    def test_polynomial_only(self, rng):
        X = rng.uniform(-1, 1, (4, 2))
        sol = CpdSolution(np.zeros((4, 1)), np.array([[1.0], [2.0], [3.0]]), np.zeros(1))
        Q = rng.normal(size=(6, 2))
        np.testing.assert_allclose(evaluate_interpolant(TPS, X, sol, 1, Q)[:, 0], 1 + 2 * Q[:, 0] + 3 * Q[:, 1])

    def test_two_point_midpoint(self):
        X = np.array([[0.0], [1.0]])
        sol = solve_exact_cpd(ED, X, np.array([0.0, 1.0]), 0)
        np.testing.assert_allclose(evaluate_interpolant(ED, X, sol, 0, [[0.5]]), [[0.5]])
