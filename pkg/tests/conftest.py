"""Shared fixtures and oracle helpers.

The oracles here are deliberately independent of the library internals:
brute-force enumeration over point-pair separators, dense grid search,
and direct indicator evaluation. Tests compare library output against
these, never against the library itself.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from preffair.core import Dataset


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance-criterion verdicts, which are otherwise hidden
    by output capture when the tests pass."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)


def with_intercept(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def make_dataset(points, labels, groups, group_count=None) -> Dataset:
    """2-d points -> Dataset with the intercept column appended."""
    z = np.asarray(groups, dtype=int)
    if group_count is None:
        group_count = int(z.max()) + 1
    return Dataset(with_intercept(points), np.asarray(labels), z, group_count)


# -- brute-force separator oracle ------------------------------------------


def separator_candidates(points: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """All homogeneous 3-vectors theta = (w, b) whose boundary passes
    through a pair of distinct 2-d points (both orientations, the offset
    nudged to either side so on-boundary points land on both sides), plus
    the all-positive and all-negative classifiers."""
    cands = [np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0])]
    n = points.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            d = points[j] - points[i]
            norm = float(np.hypot(d[0], d[1]))
            if norm < 1e-12:
                continue
            w = np.array([-d[1], d[0]]) / norm
            for sign in (1.0, -1.0):
                b = -sign * float(w @ points[i])
                for shift in (eps, -eps):
                    cands.append(np.array([sign * w[0], sign * w[1], b + shift]))
    return np.stack(cands)


def indicator_benefit(theta: np.ndarray, X: np.ndarray) -> float:
    """Fraction predicted positive, sgn(0) = +1."""
    return float(np.mean(X @ theta >= 0))


def oracle_best_assignment(data: Dataset, feasible) -> float:
    """Best training accuracy over every assignment of one candidate
    separator per group, subject to feasible(thetas) on the exact
    indicators. Returns -inf when nothing is feasible."""
    groups = list(range(data.group_count))
    Xg = {g: data.X[data.group_mask(g)] for g in groups}
    yg = {g: data.y[data.group_mask(g)] for g in groups}
    cands = {g: separator_candidates(Xg[g][:, :2]) for g in groups}
    # accuracy of each candidate on its own group
    acc = {
        g: np.mean((Xg[g] @ cands[g].T >= 0) == (yg[g] == 1)[:, None], axis=0)
        for g in groups
    }
    best = -np.inf
    for combo in itertools.product(*(range(len(cands[g])) for g in groups)):
        thetas = {g: cands[g][combo[k]] for k, g in enumerate(groups)}
        if not feasible(thetas):
            continue
        total = sum(
            acc[g][combo[k]] * Xg[g].shape[0] for k, g in enumerate(groups)
        )
        best = max(best, total / data.n)
    return best


def oracle_unconstrained(data: Dataset) -> float:
    return oracle_best_assignment(data, lambda thetas: True)


def oracle_preferred_impact(data: Dataset, floor: dict) -> float:
    """Exact indicator program: each group's benefit must reach its floor."""
    Xg = {g: data.X[data.group_mask(g)] for g in range(data.group_count)}

    def feasible(thetas):
        return all(
            indicator_benefit(thetas[g], Xg[g]) >= floor[g] - 1e-12
            for g in thetas
        )

    return oracle_best_assignment(data, feasible)


def oracle_preferred_treatment(data: Dataset) -> float:
    """Exact indicator envy-freeness across all ordered group pairs."""
    Xg = {g: data.X[data.group_mask(g)] for g in range(data.group_count)}

    def feasible(thetas):
        for g in thetas:
            own = indicator_benefit(thetas[g], Xg[g])
            for j in thetas:
                if j != g and indicator_benefit(thetas[j], Xg[g]) > own + 1e-12:
                    return False
        return True

    return oracle_best_assignment(data, feasible)


# -- small reusable datasets ------------------------------------------------


@pytest.fixture
def toy_two_groups() -> Dataset:
    """12 points, 2 groups; each group roughly separable by a different
    direction, so unconstrained per-group models disagree across groups."""
    points = np.array(
        [
            # group 0: positive to the right
            [2.0, 0.5], [2.5, -0.5], [1.8, 1.2],
            [-2.0, 0.3], [-2.4, -0.8], [-1.7, 0.9],
            # group 1: positive above
            [0.4, 2.1], [-0.6, 2.4], [0.8, 1.9],
            [0.2, -2.2], [-0.5, -1.8], [0.7, -2.5],
        ]
    )
    labels = np.array([1, 1, 1, -1, -1, -1, 1, 1, 1, -1, -1, -1])
    groups = np.array([0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1])
    return make_dataset(points, labels, groups)


@pytest.fixture
def separable_per_group() -> Dataset:
    rng = np.random.default_rng(7)
    n = 40
    X0 = rng.normal([2.0, 0.0], 0.4, (n, 2))
    X1 = rng.normal([-2.0, 0.0], 0.4, (n, 2))
    X2 = rng.normal([0.0, 2.0], 0.4, (n, 2))
    X3 = rng.normal([0.0, -2.0], 0.4, (n, 2))
    points = np.vstack([X0, X1, X2, X3])
    labels = np.array([1] * n + [-1] * n + [1] * n + [-1] * n)
    groups = np.array([0] * (2 * n) + [1] * (2 * n))
    return make_dataset(points, labels, groups)
