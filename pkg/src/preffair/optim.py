"""Smooth convex inner solver: augmented Lagrangian over L-BFGS-B.

Every training problem in this package bottoms out here. Callables
return (value, gradient) pairs. Inequality constraints are g(x) <= 0,
equalities h(x) = 0; simple bounds are passed straight to L-BFGS-B.

The exact ramp max(0, u) is non-differentiable, so constraint builders
use the softplus smoothing softramp_beta(u) = log(1 + exp(beta u)) / beta,
which over-estimates the ramp by at most ln(2)/beta. Final feasibility is
always re-checked on the exact ramp by the callers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

ValueAndGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class SolverConfig:
    gradient_tolerance: float = 1e-6
    constraint_tolerance: float = 1e-4
    max_iterations: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    max_penalty_rounds: int = 6
    smoothing_beta: float = 20.0

    def __post_init__(self):
        for name in (
            "gradient_tolerance",
            "constraint_tolerance",
            "max_iterations",
            "penalty_init",
            "smoothing_beta",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.max_penalty_rounds < 1:
            raise ValueError("max_penalty_rounds must be >= 1")


class SolveStatus(Enum):
    CONVERGED = "converged"
    CONSTRAINT_INFEASIBLE = "constraint-infeasible"
    ITERATION_LIMIT = "iteration-limit"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class SolveResult:
    x: np.ndarray
    status: SolveStatus
    objective: float
    max_violation: float
    penalty_rounds: int

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.CONVERGED


class _NonFinite(Exception):
    pass


def softramp(u: np.ndarray, beta: float) -> np.ndarray:
    """Smooth upper bound on max(0, u); gap at most ln(2)/beta."""
    return np.logaddexp(0.0, beta * np.asarray(u, dtype=float)) / beta


def softramp_grad(u: np.ndarray, beta: float) -> np.ndarray:
    """d/du softramp = logistic(beta u), computed overflow-safe."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-beta * u[pos]))
    eb = np.exp(beta * u[~pos])
    out[~pos] = eb / (1.0 + eb)
    return out


def smoothed_ramp_sum(
    theta: np.ndarray, points: np.ndarray, beta: float
) -> tuple[float, np.ndarray]:
    """Sum of softramp(theta . x_i) over rows x_i, with gradient."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    scores = points @ theta
    value = float(np.sum(softramp(scores, beta)))
    grad = points.T @ softramp_grad(scores, beta)
    return value, grad


def exact_ramp_sum(theta: np.ndarray, points: np.ndarray) -> float:
    scores = points @ theta
    return float(np.sum(np.maximum(0.0, scores)))


def gradient_check(
    func: ValueAndGrad, point: np.ndarray, step: float = 1e-5
) -> float:
    """Max relative error of the analytic gradient vs central differences."""
    if step <= 0:
        raise ValueError("step must be positive")
    point = np.asarray(point, dtype=float)
    _, grad = func(point)
    worst = 0.0
    for i in range(point.size):
        e = np.zeros_like(point)
        e[i] = step
        fp, _ = func(point + e)
        fm, _ = func(point - e)
        fd = (fp - fm) / (2 * step)
        scale = max(abs(grad[i]), abs(fd), 1.0)
        worst = max(worst, abs(grad[i] - fd) / scale)
    return worst


def _checked(func: ValueAndGrad, x: np.ndarray) -> tuple[float, np.ndarray]:
    value, grad = func(x)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise _NonFinite
    return value, np.asarray(grad, dtype=float)


def minimize(
    objective: ValueAndGrad,
    constraints: Sequence[ValueAndGrad] = (),
    x0: np.ndarray | None = None,
    config: SolverConfig = SolverConfig(),
    bounds: Sequence[tuple[float | None, float | None]] | None = None,
    eq_constraints: Sequence[ValueAndGrad] = (),
) -> SolveResult:
    """Augmented-Lagrangian minimization of a smooth convex objective
    under smooth convex inequality constraints g(x) <= 0 (plus optional
    affine equalities and simple bounds).

    Deterministic given inputs and config. Returns the best iterate with
    a status; never raises on numerical breakdown.
    """
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    m, p = len(constraints), len(eq_constraints)
    mu = np.zeros(m)  # inequality multipliers
    nu = np.zeros(p)  # equality multipliers
    rho = config.penalty_init

    def eval_constraints(xv):
        g = np.array([_checked(c, xv)[0] for c in constraints])
        h = np.array([_checked(c, xv)[0] for c in eq_constraints])
        return g, h

    def violation(g, h):
        worst = 0.0
        if g.size:
            worst = max(worst, float(np.max(g)))
        if h.size:
            worst = max(worst, float(np.max(np.abs(h))))
        return worst

    def auglag(xv):
        value, grad = _checked(objective, xv)
        grad = grad.copy()
        for j, c in enumerate(constraints):
            gj, dgj = _checked(c, xv)
            t = mu[j] + rho * gj
            if t > 0:
                value += (t * t - mu[j] * mu[j]) / (2 * rho)
                grad += t * dgj
            else:
                value -= mu[j] * mu[j] / (2 * rho)
        for j, c in enumerate(eq_constraints):
            hj, dhj = _checked(c, xv)
            value += nu[j] * hj + 0.5 * rho * hj * hj
            grad += (nu[j] + rho * hj) * dhj
        return value, grad

    if m == 0 and p == 0:
        try:
            res = _scipy_minimize(
                lambda v: _checked(objective, v),
                x,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={
                    "maxiter": config.max_iterations,
                    "gtol": config.gradient_tolerance,
                    "ftol": 1e-14,
                    "maxcor": 10,
                },
            )
        except _NonFinite:
            return SolveResult(x, SolveStatus.NUMERICAL_FAILURE, np.nan, np.inf, 0)
        status = SolveStatus.CONVERGED if res.success else SolveStatus.ITERATION_LIMIT
        return SolveResult(res.x, status, float(res.fun), 0.0, 0)

    best = None
    prev_violation = np.inf
    try:
        for round_idx in range(config.max_penalty_rounds):
            res = _scipy_minimize(
                auglag,
                x,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={
                    "maxiter": config.max_iterations,
                    "gtol": config.gradient_tolerance,
                    "ftol": 1e-14,
                    "maxcor": 10,
                },
            )
            x = res.x
            g, h = eval_constraints(x)
            viol = violation(g, h)
            obj = _checked(objective, x)[0]
            if best is None or (viol, obj) < (best[1], best[2]):
                best = (x.copy(), viol, obj)
            if viol <= config.constraint_tolerance:
                return SolveResult(
                    x, SolveStatus.CONVERGED, obj, viol, round_idx + 1
                )
            # standard first-order multiplier update
            mu = np.maximum(0.0, mu + rho * g)
            nu = nu + rho * h
            # grow the penalty when the violation fails to shrink 4x
            if viol > prev_violation / 4:
                rho *= config.penalty_growth
            prev_violation = viol
    except _NonFinite:
        return SolveResult(x, SolveStatus.NUMERICAL_FAILURE, np.nan, np.inf, 0)

    xb, viol, obj = best
    return SolveResult(
        xb, SolveStatus.CONSTRAINT_INFEASIBLE, obj, viol, config.max_penalty_rounds
    )
