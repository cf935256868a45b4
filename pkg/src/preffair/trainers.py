"""The five classifier variants: unconstrained, impact-parity baseline,
preferred treatment, preferred impact, and both.

All linear variants share one stacked parameter vector (theta_0, ...,
theta_{K-1}) and one empirical-risk objective

    (1/N) * sum_i loss(y_i, theta_{z_i} . x_i) + sum_z lambda_z |theta_z|^2,

normalized by the TOTAL sample size, so per-group losses trade off
through the shared budget. Benefit constraints are ramp sums over each
group's points, normalized by the group size so a violation of eps means
"eps per group member" regardless of group size.

The sensitive attribute never enters the feature vector; group
membership only selects which parameter vector scores an example.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import __version__
from .ccp import CcpConfig, CcpConstraint, CcpResult, CcpStatus, RampTerm, ccp_solve
from .core import Dataset, GroupConditionalModel, LinearModel
from .optim import (
    SolveStatus,
    SolverConfig,
    exact_ramp_sum,
    minimize,
    softramp,
    softramp_grad,
)

LOGISTIC = "logistic"
HINGE = "hinge"

UNCONS = "Uncons"
PARITY = "Parity"
PREFERRED_TREATMENT = "PreferredTreatment"
PREFERRED_IMPACT = "PreferredImpact"
PREFERRED_BOTH = "PreferredBoth"
VARIANTS = (UNCONS, PARITY, PREFERRED_TREATMENT, PREFERRED_IMPACT, PREFERRED_BOTH)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainSpec:
    loss: str = LOGISTIC
    lambdas: Mapping[int, float] | float = 1e-4
    parity_covariance_cap: float = 0.0
    # hinge smoothing sharpness; logistic loss ignores it
    hinge_beta: float = 20.0

    def __post_init__(self):
        if self.loss not in (LOGISTIC, HINGE):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.parity_covariance_cap < 0:
            raise ValueError("parity_covariance_cap must be >= 0")

    def lam(self, group: int) -> float:
        if isinstance(self.lambdas, Mapping):
            value = float(self.lambdas[group])
        else:
            value = float(self.lambdas)
        if value < 0:
            raise ValueError("lambda must be >= 0")
        return value


@dataclass
class TrainResult:
    model: GroupConditionalModel
    converged: bool
    max_violation: float = 0.0
    trace: list = field(default_factory=list)


def _logistic_terms(scores, y):
    # mean is applied by the caller; value_i = log(1 + exp(-y s))
    margins = y * scores
    values = np.logaddexp(0.0, -margins)
    dvalues = -y * _sigmoid(-margins)
    return values, dvalues


def _sigmoid(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _hinge_terms(scores, y, beta):
    margins = 1.0 - y * scores
    values = softramp(margins, beta)
    dvalues = -y * softramp_grad(margins, beta)
    return values, dvalues


def make_objective(data: Dataset, spec: TrainSpec, groups=None):
    """Joint regularized empirical risk over the stacked parameters of the
    given groups (default: all). Returns (objective, slices, dim)."""
    d = data.feature_dim
    groups = list(range(data.group_count)) if groups is None else list(groups)
    slices = {g: slice(i * d, (i + 1) * d) for i, g in enumerate(groups)}
    masks = {g: data.group_mask(g) for g in groups}
    N = data.n

    def objective(x):
        value = 0.0
        grad = np.zeros_like(x)
        for g in groups:
            sl = slices[g]
            theta = x[sl]
            Xg, yg = data.X[masks[g]], data.y[masks[g]]
            scores = Xg @ theta
            if spec.loss == LOGISTIC:
                values, dvalues = _logistic_terms(scores, yg)
            else:
                values, dvalues = _hinge_terms(scores, yg, spec.hinge_beta)
            lam = spec.lam(g)
            value += float(np.sum(values)) / N + lam * float(theta @ theta)
            grad[sl] = Xg.T @ dvalues / N + 2 * lam * theta
        return value, grad

    return objective, slices, d * len(groups)


def _shared_objective(data: Dataset, spec: TrainSpec):
    """Single-theta regularized risk over all examples (parity variant).
    Uses the group-0 lambda when lambdas are per-group."""
    lam = spec.lam(0)

    def objective(theta):
        scores = data.X @ theta
        if spec.loss == LOGISTIC:
            values, dvalues = _logistic_terms(scores, data.y)
        else:
            values, dvalues = _hinge_terms(scores, data.y, spec.hinge_beta)
        value = float(np.mean(values)) + lam * float(theta @ theta)
        grad = data.X.T @ dvalues / data.n + 2 * lam * theta
        return value, grad

    return objective


def train_unconstrained(
    data: Dataset, spec: TrainSpec, solver: SolverConfig = SolverConfig()
) -> GroupConditionalModel:
    """Independent regularized ERM per group (the joint objective is
    separable, so per-group solves give the joint optimum)."""
    per_group = {}
    for g in range(data.group_count):
        sub = Dataset(
            data.X[data.group_mask(g)],
            data.y[data.group_mask(g)],
            np.zeros(data.group_size(g), dtype=int),
            1,
        )
        # keep the total-N normalization of the joint objective
        scale = sub.n / data.n

        def objective(theta, sub=sub, scale=scale, lam=spec.lam(g)):
            scores = sub.X @ theta
            if spec.loss == LOGISTIC:
                values, dvalues = _logistic_terms(scores, sub.y)
            else:
                values, dvalues = _hinge_terms(scores, sub.y, spec.hinge_beta)
            value = scale * float(np.mean(values)) + lam * float(theta @ theta)
            grad = scale * sub.X.T @ dvalues / sub.n + 2 * lam * theta
            return value, grad

        res = minimize(objective, (), np.zeros(data.feature_dim), solver)
        if res.status is SolveStatus.NUMERICAL_FAILURE:
            raise TrainingError(f"unconstrained solve failed for group {g}")
        per_group[g] = LinearModel(res.x)
    return GroupConditionalModel(per_group=per_group)


def train_parity(
    data: Dataset, spec: TrainSpec, solver: SolverConfig = SolverConfig()
) -> GroupConditionalModel:
    """Single shared model constrained by the decision-boundary covariance
    proxy |(1/N) sum_i (z_i - zbar) theta . x_i| <= cap."""
    if data.group_count < 2:
        raise ValueError("parity training needs at least two groups")
    objective = _shared_objective(data, spec)
    zc = data.z - data.z.mean()
    cvec = data.X.T @ zc / data.n
    cap = spec.parity_covariance_cap

    def upper(theta):
        return float(cvec @ theta) - cap, cvec.copy()

    def lower(theta):
        return -float(cvec @ theta) - cap, -cvec

    res = minimize(objective, (upper, lower), np.zeros(data.feature_dim), solver)
    if res.status is SolveStatus.NUMERICAL_FAILURE:
        raise TrainingError("parity solve failed")
    if res.status is SolveStatus.CONSTRAINT_INFEASIBLE:
        raise TrainingError(
            f"parity covariance constraint infeasible at cap={cap} "
            f"(violation {res.max_violation:.2e}); try a larger cap"
        )
    return GroupConditionalModel(shared=LinearModel(res.x))


def _benefit_ramp(data: Dataset, group: int, sl: slice) -> RampTerm:
    Xg = data.group_features(group)
    return RampTerm(points=Xg, sl=sl, scale=1.0 / Xg.shape[0])


def _indicator_floor(data: Dataset, baseline: GroupConditionalModel):
    """Per-group indicator benefit of the baseline on the training data,
    used as the calibration floor for the impact-constrained variants."""
    return {
        g: _positive_rate(data.group_features(g) @ baseline.model_for(g).theta)
        for g in range(data.group_count)
    }


def _impact_constraints(data, parity_model, slices):
    """ramp_z(theta_z) >= ramp_z(theta'_z): RHS has no variables, so it is
    precomputed into the constant."""
    cons = []
    for g, sl in slices.items():
        Xg = data.group_features(g)
        baseline = exact_ramp_sum(parity_model.model_for(g).theta, Xg) / Xg.shape[0]
        cons.append(CcpConstraint(linearized=_benefit_ramp(data, g, sl),
                                  constant=baseline))
    return cons


def _treatment_constraints(data, slices):
    """ramp over D_z of theta_z >= ramp over D_z of theta_{z'} for z != z';
    the RHS (other group's model on this group's points) stays convex."""
    cons = []
    for g, sl in slices.items():
        Xg = data.group_features(g)
        scale = 1.0 / Xg.shape[0]
        for g2, sl2 in slices.items():
            if g2 == g:
                continue
            cons.append(
                CcpConstraint(
                    linearized=RampTerm(Xg, sl, scale),
                    convex_terms=(RampTerm(Xg, sl2, scale),),
                )
            )
    return cons


def _positive_rate(scores: np.ndarray) -> float:
    return float(np.mean(scores >= 0))


def _shift_for_rate(scores: np.ndarray, rate: float) -> float:
    """Smallest upward intercept shift making the positive rate >= rate."""
    n = scores.size
    k = min(n, max(1, int(np.ceil(rate * n))))
    kth_largest = np.partition(scores, n - k)[n - k]
    return max(0.0, -float(kth_largest))


def _threshold_candidates(own_scores: np.ndarray, extra, count: int) -> np.ndarray:
    """Candidate score offsets for one group: an even sweep over the
    group's own score range (each candidate puts the decision threshold
    just below one observed score), zero, and any caller-supplied exact
    targets."""
    s = np.sort(own_scores)
    idx = np.unique(np.linspace(0, s.size - 1, min(count, s.size)).astype(int))
    cands = -(s[idx] - 1e-9)
    return np.unique(np.concatenate([cands, [0.0], np.asarray(list(extra))]))


def _joint_threshold_search(
    scores, labels, impact_floor, envy_free, margin, envy_slack, count
):
    """Exhaustive two-group search over per-group score offsets: maximize
    training accuracy subject to the exact indicator constraints. A tiny
    L1 penalty on the offsets keeps the unshifted solution preferred among
    accuracy ties. Returns None when no candidate pair is feasible."""
    groups = sorted(labels)
    g0, g1 = groups
    cand = {}
    for g in groups:
        own = scores[(g, g)]
        extra = []
        if g in impact_floor:
            extra.append(_shift_for_rate(own, min(impact_floor[g] + margin, 1.0)))
        if envy_free:
            for j in groups:
                if j != g:
                    extra.append(
                        _shift_for_rate(own, _positive_rate(scores[(g, j)]))
                    )
        cand[g] = _threshold_candidates(own, extra, count)
    # rates[(g, j)][c]: group g's positive rate under j's classifier
    # shifted by j's c-th candidate; acc[g][c]: group g's accuracy under
    # its own classifier shifted by its c-th candidate
    rates, acc = {}, {}
    for g in groups:
        for j in groups:
            if not envy_free and j != g:
                continue
            s = np.sort(scores[(g, j)])
            hits = np.searchsorted(s, -cand[j], side="left")
            rates[(g, j)] = 1.0 - hits / s.size
        shifted = scores[(g, g)][None, :] + cand[g][:, None]
        acc[g] = np.mean((shifted >= 0) == (labels[g] == 1)[None, :], axis=1)
    floor = {
        g: min(impact_floor[g] + margin, 1.0) for g in impact_floor if g in labels
    }
    n0, n1 = labels[g0].size, labels[g1].size
    best_value, best = -np.inf, None
    for i0, d0 in enumerate(cand[g0]):
        if g0 in floor and rates[(g0, g0)][i0] < floor[g0] - 1e-9:
            continue
        ok = np.ones(cand[g1].size, dtype=bool)
        if g1 in floor:
            ok &= rates[(g1, g1)] >= floor[g1] - 1e-9
        if envy_free:
            ok &= rates[(g0, g0)][i0] >= rates[(g0, g1)] - envy_slack
            ok &= rates[(g1, g1)] >= rates[(g1, g0)][i0] - envy_slack
        if not ok.any():
            continue
        value = (n0 * acc[g0][i0] + n1 * acc[g1]) / (n0 + n1)
        value = value - 1e-6 * (abs(d0) + np.abs(cand[g1]))
        value[~ok] = -np.inf
        i1 = int(np.argmax(value))
        if value[i1] > best_value:
            best_value = float(value[i1])
            best = {g0: float(d0), g1: float(cand[g1][i1])}
    return best


def _upward_fixed_point(
    scores, impact_floor, envy_free, margin, envy_slack, max_rounds
):
    """Monotone fallback for more than two groups (and for two-group
    instances with no feasible threshold pair): repeatedly raise each
    group's offset to its current requirement. Only ever shifts upward,
    so it converges, but endogenous envy requirements can drive it toward
    the all-positive classifier; the joint search is preferred."""
    groups = sorted({g for g, j in scores if g == j})
    offsets = {g: 0.0 for g in groups}
    for _ in range(max_rounds):
        moved = False
        for g in groups:
            required = 0.0
            if g in impact_floor:
                required = min(impact_floor[g] + margin, 1.0)
            if envy_free:
                for j in groups:
                    if j != g:
                        required = max(
                            required,
                            _positive_rate(scores[(g, j)] + offsets[j])
                            - envy_slack,
                        )
            own = scores[(g, g)] + offsets[g]
            if _positive_rate(own) < required - 1e-9:
                delta = _shift_for_rate(own, required)
                if delta > 0.0:
                    offsets[g] += delta
                    moved = True
        if not moved:
            break
    return offsets


def calibrate_offsets(
    scores: Mapping[tuple[int, int], np.ndarray],
    labels: Mapping[int, np.ndarray],
    impact_floor: Mapping[int, float] | None = None,
    envy_free: bool = False,
    margin: float = 0.0,
    envy_slack: float = 0.005,
    candidates: int = 301,
    max_rounds: int = 25,
) -> dict[int, float]:
    """Per-group additive score offsets that make the exact indicator
    benefit constraints hold on the given scores.

    scores[(g, j)] holds group g's decision values under group j's
    classifier ((g, g) entries suffice unless envy_free); labels[g] holds
    group g's true labels in {-1, +1}. impact_floor gives exogenous
    per-group benefit floors (the impact baseline's rates); margin shifts
    the floors (negative relaxes them; achievable rates move in 1/n_g
    steps, so any positive margin rounds the requirement up a full step
    on small groups); envy_free additionally requires each group's own
    rate to dominate its rate under every other classifier, up to
    envy_slack."""
    impact_floor = dict(impact_floor or {})
    if len(labels) == 2:
        found = _joint_threshold_search(
            scores, labels, impact_floor, envy_free, margin, envy_slack,
            candidates,
        )
        if found is not None:
            return found
    return _upward_fixed_point(
        scores, impact_floor, envy_free, margin, envy_slack, max_rounds
    )


def calibrate_benefits(
    model: GroupConditionalModel,
    data: Dataset,
    impact_floor: Mapping[int, float] | None = None,
    envy_free: bool = False,
    margin: float = 0.0,
    envy_slack: float = 0.005,
) -> GroupConditionalModel:
    """Raise group intercepts until exact (indicator) benefit constraints
    hold on the training data.

    The ramp sums the CCP constrains are a convex stand-in for the
    indicator benefits the guarantees are stated in, and ramp dominance
    does not imply indicator dominance: scaling a parameter vector grows
    its ramp sum but leaves its decision boundary (and so its indicator
    benefit) unchanged. This closes that gap by decision-threshold
    adjustment via calibrate_offsets; the chosen per-group offsets are
    folded into the intercepts. Requires an intercept (constant-one)
    feature in the last column, which the data loaders always append.
    """
    thetas = {g: model.model_for(g).theta.copy() for g in model.groups()}
    features = {g: data.group_features(g) for g in thetas}
    scores = {
        (g, j): features[g] @ thetas[j]
        for g in thetas
        for j in thetas
        if envy_free or g == j
    }
    labels = {g: data.y[data.group_mask(g)] for g in thetas}
    offsets = calibrate_offsets(
        scores, labels, impact_floor, envy_free, margin, envy_slack
    )
    for g, delta in offsets.items():
        thetas[g][-1] += delta
    return GroupConditionalModel(
        per_group={g: LinearModel(t) for g, t in thetas.items()}
    )


def _stacked_to_model(x, slices) -> GroupConditionalModel:
    return GroupConditionalModel(
        per_group={g: LinearModel(x[sl]) for g, sl in slices.items()}
    )


def _warm_start(data, spec, slices, solver) -> np.ndarray:
    uncons = train_unconstrained(data, spec, solver)
    x0 = np.empty(data.feature_dim * len(slices))
    for g, sl in slices.items():
        x0[sl] = uncons.model_for(g).theta
    return x0


def _run_ccp(data, spec, constraints, ccp_config, solver,
             impact_floor=None, envy_free=False, calibrate=True) -> TrainResult:
    objective, slices, dim = make_objective(data, spec)
    x0 = _warm_start(data, spec, slices, solver)
    result = ccp_solve(objective, constraints, x0, ccp_config, solver)
    if result.status is CcpStatus.NUMERICAL_FAILURE:
        raise TrainingError("CCP solve failed numerically")
    model = _stacked_to_model(result.x, slices)
    max_violation = result.max_violation
    if calibrate:
        model = calibrate_benefits(model, data, impact_floor, envy_free)
        x = np.concatenate([model.model_for(g).theta for g in sorted(slices)])
        max_violation = max(
            0.0, *(c.exact_violation(x) for c in constraints)
        )
    return TrainResult(
        model=model,
        converged=result.ok,
        max_violation=max_violation,
        trace=result.trace,
    )


def train_preferred_impact(
    data: Dataset,
    parity_model: GroupConditionalModel,
    spec: TrainSpec,
    ccp_config: CcpConfig = CcpConfig(),
    solver: SolverConfig = SolverConfig(),
    calibrate: bool = True,
) -> TrainResult:
    """Group-conditional classifiers whose per-group benefit dominates the
    given impact-parity baseline's on the training data (ramp-sum CCP
    followed by indicator calibration; see calibrate_benefits)."""
    _, slices, _ = make_objective(data, spec)
    constraints = _impact_constraints(data, parity_model, slices)
    return _run_ccp(
        data, spec, constraints, ccp_config, solver,
        impact_floor=_indicator_floor(data, parity_model), calibrate=calibrate,
    )


def train_preferred_treatment(
    data: Dataset,
    spec: TrainSpec,
    ccp_config: CcpConfig = CcpConfig(),
    solver: SolverConfig = SolverConfig(),
    calibrate: bool = True,
) -> TrainResult:
    """Group-conditional classifiers with benefit envy-freeness across all
    ordered group pairs."""
    if data.group_count < 2:
        raise ValueError("preferred treatment needs at least two groups")
    _, slices, _ = make_objective(data, spec)
    constraints = _treatment_constraints(data, slices)
    return _run_ccp(data, spec, constraints, ccp_config, solver,
                    envy_free=True, calibrate=calibrate)


def train_preferred_both(
    data: Dataset,
    parity_model: GroupConditionalModel,
    spec: TrainSpec,
    ccp_config: CcpConfig = CcpConfig(),
    solver: SolverConfig = SolverConfig(),
    calibrate: bool = True,
) -> TrainResult:
    """Union of the preferred-impact and preferred-treatment constraints."""
    _, slices, _ = make_objective(data, spec)
    constraints = _impact_constraints(data, parity_model, slices) + \
        _treatment_constraints(data, slices)
    return _run_ccp(
        data, spec, constraints, ccp_config, solver,
        impact_floor=_indicator_floor(data, parity_model), envy_free=True,
        calibrate=calibrate,
    )


SERIAL_FORMAT = "preffair-linear-model"
SERIAL_VERSION = 1


def model_to_json(
    model: GroupConditionalModel,
    variant: str,
    preprocessing: dict | None = None,
) -> str:
    doc = {
        "format": SERIAL_FORMAT,
        "format_version": SERIAL_VERSION,
        "software_version": __version__,
        "variant": variant,
        "shared": model.is_shared,
        "preprocessing": preprocessing or {},
    }
    if model.is_shared:
        doc["theta"] = model.shared.theta.tolist()
    else:
        doc["per_group"] = {str(g): model.per_group[g].theta.tolist()
                            for g in model.groups()}
    return json.dumps(doc, sort_keys=True, indent=2)


def model_from_json(text: str) -> tuple[GroupConditionalModel, str, dict]:
    doc = json.loads(text)
    if doc.get("format") != SERIAL_FORMAT:
        raise ValueError("not a linear model document")
    if doc["shared"]:
        model = GroupConditionalModel(shared=LinearModel(np.array(doc["theta"])))
    else:
        model = GroupConditionalModel(
            per_group={int(g): LinearModel(np.array(t))
                       for g, t in doc["per_group"].items()}
        )
    return model, doc["variant"], doc.get("preprocessing", {})
