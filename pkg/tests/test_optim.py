"""Inner solver: smoothing, gradients, augmented-Lagrangian minimize."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from preffair.optim import (
    SolveStatus,
    SolverConfig,
    exact_ramp_sum,
    gradient_check,
    minimize,
    smoothed_ramp_sum,
    softramp,
    softramp_grad,
)


class TestSoftramp:
    def test_value_at_zero(self):
        for beta in (1.0, 20.0, 100.0):
            assert softramp(np.array(0.0), beta) == pytest.approx(
                np.log(2) / beta
            )

    def test_sharp_beta_approaches_exact_ramp(self):
        u = np.linspace(-3, 3, 61)
        gap = softramp(u, 1e4) - np.maximum(0.0, u)
        assert np.all(np.abs(gap) <= 1e-3)

    @settings(max_examples=200, deadline=None)
    @given(u=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
           beta=st.floats(min_value=0.1, max_value=1e4))
    def test_bounded_overestimate(self, u, beta):
        gap = float(softramp(np.array(u), beta)) - max(0.0, u)
        slack = 1e-9 * max(1.0, abs(u))  # float rounding at large |u|
        assert -slack <= gap <= np.log(2) / beta + slack

    def test_gradient_is_logistic(self):
        u = np.array([-500.0, -1.0, 0.0, 1.0, 500.0])
        g = softramp_grad(u, 20.0)
        assert np.all(np.isfinite(g))
        assert np.all((g >= 0) & (g <= 1))
        assert g[2] == pytest.approx(0.5)


class TestSmoothedRampSum:
    def test_random_instance_brackets_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            points = rng.normal(size=(5, 3))
            theta = rng.normal(size=3)
            beta = 20.0
            value, _ = smoothed_ramp_sum(theta, points, beta)
            exact = exact_ramp_sum(theta, points)
            assert exact - 1e-12 <= value <= exact + 5 * np.log(2) / beta + 1e-12

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ValueError):
            smoothed_ramp_sum(np.zeros(2), np.zeros((1, 2)), 0.0)


class TestGradientCheck:
    def test_linear_function_exact(self):
        c = np.array([1.0, -2.0, 3.0])

        def func(x):
            return float(c @ x), c.copy()

        assert gradient_check(func, np.array([0.3, -0.7, 2.0])) < 1e-9

    def test_logistic_loss(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 4))
        y = rng.choice([-1.0, 1.0], 30)

        def func(theta):
            m = y * (X @ theta)
            value = float(np.mean(np.logaddexp(0.0, -m)))
            grad = -X.T @ (y / (1.0 + np.exp(m))) / 30
            return value, grad

        assert gradient_check(func, rng.normal(size=4)) <= 1e-4

    def test_quadratic(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])

        def func(x):
            return float(0.5 * x @ A @ x), A @ x

        assert gradient_check(func, np.array([1.0, -2.0])) <= 1e-4

    def test_smoothed_ramp_sum_away_from_kinks(self):
        rng = np.random.default_rng(2)
        points = rng.normal(size=(8, 3))
        theta = rng.normal(size=3) + 1.0  # generic point, off the kinks

        def func(t):
            return smoothed_ramp_sum(t, points, 20.0)

        assert gradient_check(func, theta) <= 1e-4

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            gradient_check(lambda x: (0.0, x), np.zeros(2), step=0.0)


def quadratic(c):
    def func(x):
        return float(0.5 * np.sum((x - c) ** 2)), x - c

    return func


class TestMinimize:
    def test_unconstrained_quadratic(self):
        c = np.array([3.0, -1.0, 0.5])
        res = minimize(quadratic(c), (), np.zeros(3))
        assert res.ok
        np.testing.assert_allclose(res.x, c, atol=1e-5)

    def test_kkt_active_constraint(self):
        # minimize x^2 s.t. x >= 1  ->  x = 1
        def con(x):  # 1 - x <= 0
            return float(1.0 - x[0]), np.array([-1.0])

        res = minimize(quadratic(np.zeros(1)), (con,), np.array([5.0]))
        assert res.ok
        assert res.x[0] == pytest.approx(1.0, abs=1e-3)

    def test_inactive_constraint_ignored(self):
        def con(x):  # x <= 10
            return float(x[0] - 10.0), np.array([1.0])

        res = minimize(quadratic(np.array([2.0])), (con,), np.array([0.0]))
        assert res.ok
        assert res.x[0] == pytest.approx(2.0, abs=1e-4)

    def test_equality_constraint(self):
        # minimize ||x||^2 s.t. sum x = 1  ->  x = 1/3 each
        def h(x):
            return float(x.sum() - 1.0), np.ones(3)

        res = minimize(quadratic(np.zeros(3)), (), np.zeros(3),
                       eq_constraints=(h,))
        assert res.ok
        np.testing.assert_allclose(res.x, 1 / 3, atol=1e-3)

    def test_bounds(self):
        res = minimize(quadratic(np.array([5.0, -5.0])), (),
                       np.zeros(2), bounds=[(0.0, 1.0), (0.0, 1.0)])
        assert res.ok
        np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-6)

    def test_nan_objective_reported(self):
        def bad(x):
            return float("nan"), np.zeros(2)

        res = minimize(bad, (), np.zeros(2))
        assert res.status is SolveStatus.NUMERICAL_FAILURE

    def test_nan_constraint_reported(self):
        def bad_con(x):
            return float("inf"), np.zeros(1)

        res = minimize(quadratic(np.zeros(1)), (bad_con,), np.zeros(1))
        assert res.status is SolveStatus.NUMERICAL_FAILURE

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        A = rng.normal(size=(4, 4))
        A = A @ A.T + np.eye(4)
        b = rng.normal(size=4)

        def objective(x):
            return float(0.5 * x @ A @ x + b @ x), A @ x + b

        def con(x):
            return float(x.sum() - 0.5), np.ones(4)

        r1 = minimize(objective, (con,), np.zeros(4))
        r2 = minimize(objective, (con,), np.zeros(4))
        np.testing.assert_array_equal(r1.x, r2.x)

    def test_rejects_nonfinite_x0(self):
        with pytest.raises(ValueError):
            minimize(quadratic(np.zeros(1)), (), np.array([np.inf]))


def grid_oracle_2d(objective, c, d, half=8.0):
    """Grid-search oracle for min f(x) s.t. c.x <= d in 2-d.

    The optimum is either the unconstrained minimizer (if feasible) or a
    point on the boundary line c.x = d, so two nested grid refinements
    cover both cases: a 2-d sweep ignoring the constraint and a 1-d
    sweep along the boundary. Each refinement halves around the best
    point, reaching ~1e-6 resolution."""
    center = np.zeros(2)
    h = half
    for _ in range(8):
        xs = np.linspace(center[0] - h, center[0] + h, 81)
        ys = np.linspace(center[1] - h, center[1] + h, 81)
        grid = np.array([[x, y] for x in xs for y in ys])
        vals = [objective(v)[0] for v in grid]
        center = grid[int(np.argmin(vals))]
        h = h * (2.0 / 80) * 2
    best = objective(center)[0] if c @ center <= d + 1e-9 else np.inf

    x0 = c * d / (c @ c)           # closest boundary point to the origin
    tangent = np.array([-c[1], c[0]]) / np.hypot(c[0], c[1])
    t_center, h = 0.0, half * 2
    for _ in range(8):
        ts = np.linspace(t_center - h, t_center + h, 161)
        vals = [objective(x0 + t * tangent)[0] for t in ts]
        t_center = ts[int(np.argmin(vals))]
        h = h * (2.0 / 160) * 2
    return min(best, objective(x0 + t_center * tangent)[0])


class TestGridOracle:
    def test_random_constrained_qps(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            M = rng.normal(size=(2, 2))
            A = M @ M.T + 0.5 * np.eye(2)
            b = rng.normal(size=2)
            c = rng.normal(size=2)
            d = float(rng.normal())

            def objective(x, A=A, b=b):
                return float(0.5 * x @ A @ x + b @ x), A @ x + b

            def con(x, c=c, d=d):  # c.x <= d
                return float(c @ x - d), c.copy()

            res = minimize(objective, (con,), np.zeros(2),
                           config=SolverConfig(max_penalty_rounds=12))
            assert res.ok
            oracle_val = grid_oracle_2d(objective, c, d)
            assert abs(res.objective - oracle_val) <= 1e-3


class TestSolverConfigValidation:
    def test_positive_fields(self):
        with pytest.raises(ValueError):
            SolverConfig(gradient_tolerance=0.0)
        with pytest.raises(ValueError):
            SolverConfig(penalty_growth=1.0)
        with pytest.raises(ValueError):
            SolverConfig(max_penalty_rounds=0)
