"""Convex-concave procedure for ramp-sum benefit constraints.

Every fairness constraint this package trains with has the shape

    constant + sum_convex_ramps(x) - ramp_sum(x[sl]) <= 0,

i.e. a convex function minus a convex ramp sum. Each outer iteration
replaces the subtracted ramp sum by its affine tangent minorant at the
current iterate, which makes the constraint convex and conservative
(the minorant never exceeds the true ramp sum), then solves the
resulting convex subproblem with L1-penalized slack variables so the
subproblem is always feasible. The slack weight tau grows geometrically.

Exact feasibility and the stopping test are always evaluated on the
exact (unsmoothed) ramp sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .optim import (
    SolveStatus,
    SolverConfig,
    ValueAndGrad,
    exact_ramp_sum,
    minimize,
    smoothed_ramp_sum,
)


@dataclass(frozen=True)
class CcpConfig:
    max_outer_iterations: int = 50
    objective_tolerance: float = 1e-6
    constraint_tolerance: float = 1e-4
    initial_slack_weight: float = 1.0
    slack_growth: float = 2.0
    slack_weight_cap: float = 1e4

    def __post_init__(self):
        if min(
            self.max_outer_iterations,
            self.objective_tolerance,
            self.constraint_tolerance,
            self.initial_slack_weight,
            self.slack_weight_cap,
        ) <= 0:
            raise ValueError("CcpConfig fields must be positive")
        if self.slack_growth <= 1:
            raise ValueError("slack_growth must exceed 1")


class CcpStatus(Enum):
    CONVERGED = "converged"
    STALLED = "stalled"
    ITERATION_LIMIT = "iteration-limit"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True)
class RampTerm:
    """Ramp sum over the scores points @ x[sl], optionally scaled."""

    points: np.ndarray
    sl: slice
    scale: float = 1.0

    def exact(self, x: np.ndarray) -> float:
        return self.scale * exact_ramp_sum(x[self.sl], self.points)

    def smooth(self, x: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
        value, grad_local = smoothed_ramp_sum(x[self.sl], self.points, beta)
        grad = np.zeros_like(x)
        grad[self.sl] = self.scale * grad_local
        return self.scale * value, grad


@dataclass(frozen=True)
class CcpConstraint:
    """constant + sum(convex_terms) - linearized_term <= 0."""

    linearized: RampTerm
    convex_terms: tuple[RampTerm, ...] = ()
    constant: float = 0.0

    def exact_violation(self, x: np.ndarray) -> float:
        value = self.constant + sum(t.exact(x) for t in self.convex_terms)
        return value - self.linearized.exact(x)


def linearize_ramp_sum(
    theta0: np.ndarray, points: np.ndarray
) -> tuple[np.ndarray, float]:
    """Tangent affine minorant of theta -> sum_i max(0, theta . x_i) at
    theta0: coefficient vector a and offset b with a . theta0 + b equal to
    the exact ramp sum there. Points sitting exactly on the kink
    contribute the zero subgradient branch."""
    theta0 = np.asarray(theta0, dtype=float)
    if not np.all(np.isfinite(theta0)):
        raise ValueError("theta0 must be finite")
    active = points @ theta0 > 0
    a = points[active].sum(axis=0) if active.any() else np.zeros_like(theta0)
    return a, 0.0


@dataclass
class CcpTraceRow:
    iteration: int
    objective: float
    penalized_objective: float
    max_violation: float
    slack_weight: float


@dataclass
class CcpResult:
    x: np.ndarray
    status: CcpStatus
    objective: float
    max_violation: float
    trace: list[CcpTraceRow] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status is CcpStatus.CONVERGED


def trace_to_csv(trace: Sequence[CcpTraceRow]) -> str:
    lines = ["iteration,objective,penalized_objective,max_violation,slack_weight"]
    for r in trace:
        lines.append(
            f"{r.iteration},{r.objective!r},{r.penalized_objective!r},"
            f"{r.max_violation!r},{r.slack_weight!r}"
        )
    return "\n".join(lines) + "\n"


def ccp_solve(
    objective: ValueAndGrad,
    constraints: Sequence[CcpConstraint],
    x0: np.ndarray,
    config: CcpConfig = CcpConfig(),
    solver: SolverConfig = SolverConfig(),
    bounds: Sequence[tuple[float | None, float | None]] | None = None,
    eq_constraints: Sequence[ValueAndGrad] = (),
) -> CcpResult:
    """Penalty convex-concave procedure.

    With no constraints this is a single inner minimize call. Otherwise
    each round linearizes the concave side of every constraint at the
    current iterate, appends one slack variable per constraint, and
    minimizes objective + tau * sum(slack) subject to the convexified
    constraints. Stops when the objective settles and every EXACT ramp
    constraint is within tolerance.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    m = len(constraints)
    beta = solver.smoothing_beta

    if m == 0:
        res = minimize(objective, (), x, solver, bounds=bounds,
                       eq_constraints=eq_constraints)
        status = (
            CcpStatus.CONVERGED if res.ok else
            CcpStatus.NUMERICAL_FAILURE
            if res.status is SolveStatus.NUMERICAL_FAILURE
            else CcpStatus.ITERATION_LIMIT
        )
        return CcpResult(res.x, status, res.objective, 0.0,
                         [CcpTraceRow(0, res.objective, res.objective, 0.0, 0.0)])

    tau = config.initial_slack_weight
    trace: list[CcpTraceRow] = []
    best = None  # (violation, objective, x)
    prev_obj = None
    stall_rounds = 0

    var_bounds = list(bounds) if bounds is not None else [(None, None)] * n
    slack_bounds = [(0.0, None)] * m

    def lift(func: ValueAndGrad) -> ValueAndGrad:
        def wrapped(v):
            value, grad = func(v[:n])
            g = np.zeros_like(v)
            g[:n] = grad
            return value, g

        return wrapped

    lifted_eq = [lift(c) for c in eq_constraints]

    for it in range(config.max_outer_iterations):
        # Convexify: replace each subtracted ramp sum by its minorant at x.
        sub_cons: list[ValueAndGrad] = []
        for j, con in enumerate(constraints):
            a, b = linearize_ramp_sum(x[con.linearized.sl], con.linearized.points)
            a = a * con.linearized.scale
            b = b * con.linearized.scale

            def g(v, con=con, a=a, b=b, j=j, sl=con.linearized.sl):
                value = con.constant - (a @ v[:n][sl] + b) - v[n + j]
                grad = np.zeros_like(v)
                grad[sl] = -a
                grad[n + j] = -1.0
                for t in con.convex_terms:
                    tv, tg = t.smooth(v[:n], beta)
                    value += tv
                    grad[:n] += tg
                return value, grad

            sub_cons.append(g)

        def penalized(v):
            value, grad = objective(v[:n])
            g = np.zeros_like(v)
            g[:n] = grad
            value += tau * float(np.sum(v[n:]))
            g[n:] = tau
            return value, g

        # Warm start: previous x with just-feasible slacks.
        v0 = np.concatenate([x, np.zeros(m)])
        for j, con in enumerate(sub_cons):
            v0[n + j] = max(0.0, con(v0)[0] + v0[n + j])
        res = minimize(
            penalized,
            sub_cons,
            v0,
            solver,
            bounds=var_bounds + slack_bounds,
            eq_constraints=lifted_eq,
        )
        if res.status is SolveStatus.NUMERICAL_FAILURE:
            return CcpResult(x, CcpStatus.NUMERICAL_FAILURE, np.nan, np.inf, trace)
        x = res.x[:n]

        obj = objective(x)[0]
        violations = [con.exact_violation(x) for con in constraints]
        max_viol = max(max(violations), 0.0)
        pen_obj = obj + tau * sum(max(v, 0.0) for v in violations)
        trace.append(CcpTraceRow(it, obj, pen_obj, max_viol, tau))

        if best is None or (max_viol, obj) < (best[0], best[1]):
            best = (max_viol, obj, x.copy())
            stall_rounds = 0
        else:
            stall_rounds += 1

        feasible = max_viol <= config.constraint_tolerance
        settled = prev_obj is not None and abs(obj - prev_obj) < config.objective_tolerance
        if feasible and settled:
            return CcpResult(x, CcpStatus.CONVERGED, obj, max_viol, trace)
        prev_obj = obj

        if tau >= config.slack_weight_cap and stall_rounds >= 5:
            bv, bo, bx = best
            return CcpResult(bx, CcpStatus.STALLED, bo, bv, trace)
        tau = min(tau * config.slack_growth, config.slack_weight_cap)

    bv, bo, bx = best
    status = CcpStatus.CONVERGED if bv <= config.constraint_tolerance else CcpStatus.ITERATION_LIMIT
    return CcpResult(bx, status, bo, bv, trace)
