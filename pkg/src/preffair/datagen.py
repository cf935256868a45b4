"""Seeded synthetic dataset generators.

Two 2-d generators: a linearly separable-ish Gaussian pair and a
non-linear two-component mixture per class. In both, the sensitive
attribute z is drawn from a Bernoulli whose parameter is the
class-conditional density ratio evaluated at a rotated copy of x, so z
correlates with x but is not a deterministic function of it.

Reproducibility: a single user seed feeds numpy's SeedSequence, which is
split into three independent substreams (labels, mixture components,
features) plus one for the group draw. Same seed, same platform =>
bit-identical output.
"""

from __future__ import annotations

import numpy as np

from .core import Dataset

ROTATION = np.array(
    [
        [np.cos(np.pi / 8), -np.sin(np.pi / 8)],
        [np.sin(np.pi / 8), np.cos(np.pi / 8)],
    ]
)

# Linear generator: one Gaussian per class.
LINEAR_MEAN_POS = np.array([2.0, 2.0])
LINEAR_COV_POS = np.array([[5.0, 1.0], [1.0, 5.0]])
LINEAR_MEAN_NEG = np.array([-2.0, -2.0])
LINEAR_COV_NEG = np.array([[10.0, 1.0], [1.0, 3.0]])

# Non-linear generator: two mixture components per class, chosen by a
# fair Bernoulli. The printed covariance for (y=-1, beta=1) is [4 4; 2 5],
# which is not symmetric; we use its symmetric part [4 3; 3 5] (positive
# definite) and keep the raw matrix here for reference.
NONLINEAR_COV_NEG1_RAW = np.array([[4.0, 4.0], [2.0, 5.0]])
NONLINEAR_POS = (
    (np.array([2.0, 2.0]), np.array([[5.0, 1.0], [1.0, 5.0]])),  # beta = 1
    (np.array([-2.0, -2.0]), np.array([[10.0, 1.0], [1.0, 3.0]])),  # beta = 0
)
NONLINEAR_NEG = (
    (np.array([4.0, -4.0]), (NONLINEAR_COV_NEG1_RAW + NONLINEAR_COV_NEG1_RAW.T) / 2),
    (np.array([-4.0, 6.0]), np.array([[6.0, 2.0], [2.0, 3.0]])),
)


def _log_gaussian(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density of N(mean, cov) at the rows of X."""
    L = np.linalg.cholesky(cov)
    diff = X - mean
    sol = np.linalg.solve(L, diff.T)
    quad = np.sum(sol**2, axis=0)
    logdet = 2 * np.sum(np.log(np.diag(L)))
    return -0.5 * (quad + logdet + X.shape[1] * np.log(2 * np.pi))


def _sample_gaussian(rng, mean, cov, n: int) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    return mean + rng.standard_normal((n, 2)) @ L.T


def _group_probability(X: np.ndarray, log_pos, log_neg) -> np.ndarray:
    """p(z=1 | x) = p(x'|y=1) / (p(x'|y=1) + p(x'|y=-1)) with x' the
    rotated point (row-vector convention: x' = x R, a clockwise rotation
    of the point by pi/8).

    Computed through log densities: the ratio is a logistic of the
    log-density difference, evaluated branch-wise so the exponential
    never overflows. Probabilities can still round to exactly 0 or 1 in
    floating point when |delta| exceeds ~745, far outside the sampled
    range.
    """
    Xr = X @ ROTATION
    delta = log_pos(Xr) - log_neg(Xr)
    p = np.empty_like(delta)
    pos = delta >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-delta[pos]))
    e = np.exp(delta[~pos])
    p[~pos] = e / (1.0 + e)
    return p


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _streams(seed: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def gen_linear_synthetic(n: int = 20_000, seed: int = 0) -> Dataset:
    """Two-Gaussian dataset with a density-ratio sensitive attribute."""
    if n < 2:
        raise ValueError("need at least 2 samples")
    rng_label, rng_feat, rng_group = _streams(seed, 3)
    y = np.where(rng_label.random(n) < 0.5, 1, -1)
    X = np.empty((n, 2))
    pos = y == 1
    X[pos] = _sample_gaussian(rng_feat, LINEAR_MEAN_POS, LINEAR_COV_POS, int(pos.sum()))
    X[~pos] = _sample_gaussian(
        rng_feat, LINEAR_MEAN_NEG, LINEAR_COV_NEG, int((~pos).sum())
    )
    p = _group_probability(
        X,
        lambda V: _log_gaussian(V, LINEAR_MEAN_POS, LINEAR_COV_POS),
        lambda V: _log_gaussian(V, LINEAR_MEAN_NEG, LINEAR_COV_NEG),
    )
    z = (rng_group.random(n) < p).astype(int)
    return Dataset(_with_intercept(X), y, z, group_count=2)


def _log_mixture(X: np.ndarray, components) -> np.ndarray:
    logs = np.stack([_log_gaussian(X, m, c) for m, c in components])
    # equal-weight two-component mixture
    return np.logaddexp(logs[0], logs[1]) - np.log(2.0)


def gen_nonlinear_synthetic(n: int = 4_000, seed: int = 0) -> Dataset:
    """Mixture-per-class dataset that a linear boundary cannot separate."""
    if n < 2:
        raise ValueError("need at least 2 samples")
    rng_label, rng_beta, rng_feat, rng_group = _streams(seed, 4)
    y = np.where(rng_label.random(n) < 0.5, 1, -1)
    beta = rng_beta.random(n) < 0.5
    X = np.empty((n, 2))
    for label, components in ((1, NONLINEAR_POS), (-1, NONLINEAR_NEG)):
        for b, (mean, cov) in ((True, components[0]), (False, components[1])):
            sel = (y == label) & (beta == b)
            X[sel] = _sample_gaussian(rng_feat, mean, cov, int(sel.sum()))
    p = _group_probability(
        X,
        lambda V: _log_mixture(V, NONLINEAR_POS),
        lambda V: _log_mixture(V, NONLINEAR_NEG),
    )
    z = (rng_group.random(n) < p).astype(int)
    return Dataset(_with_intercept(X), y, z, group_count=2)
