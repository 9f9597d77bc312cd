"""Model-selection baselines, error metrics and the regret-bound evaluator.

The regret experiment replays the full pipeline on a bounded process many
times and measures how often the stacked model's squared estimation error
exceeds the best candidate's by more than the finite-sample slack.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import Design, split
from .dgp import DgpSpec, draw_covariates, generate_dataset, true_tau
from .ensemble import (averaging_loss, build_plugin_problem, candidate_matrix,
                       solve_stacking, WeightRegime)
from .errors import ParameterError
from .metalearners import CateAlgorithmSpec, CateModel, MetaFramework, fit_candidate_library
from .pseudo import MuFitMode, build_pseudo_outcomes
from .regressors import RegressorKind, RegressorSpec
from .seeding import derive_seed


@dataclass(frozen=True)
class EvaluationSample:
    """Covariates with ground-truth effects, for scoring fitted models."""

    covariates: np.ndarray
    true_tau: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        tau = np.asarray(self.true_tau, dtype=float)
        if tau.shape != (X.shape[0],):
            raise ParameterError("true effects must align with the covariate rows")
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "true_tau", tau)


def evaluation_sample(dgp: DgpSpec, n: int, seed: int) -> EvaluationSample:
    """Fresh covariate draw with exact conditional-mean effects."""
    X = draw_covariates(dgp, n, seed)
    return EvaluationSample(covariates=X, true_tau=true_tau(dgp, X))


def pehe_squared(model, sample: EvaluationSample) -> float:
    """Mean squared deviation between predicted and true effects."""
    if sample.covariates.shape[0] == 0:
        raise ParameterError("evaluation sample must be nonempty")
    resid = model.predict(sample.covariates) - sample.true_tau
    return float(np.mean(resid**2))


def pehe(model, sample: EvaluationSample) -> float:
    """Root mean squared deviation between predicted and true effects."""
    return math.sqrt(pehe_squared(model, sample))


def oracle_select(models: list[CateModel], avg_sample: EvaluationSample) -> int:
    """Index minimizing the idealized criterion that uses true effects.

    Only available in simulation; ties break to the lowest index.
    """
    if not models:
        raise ParameterError("model list must not be empty")
    losses = [pehe_squared(m, avg_sample) for m in models]
    return int(np.argmin(losses))


def plugin_select(models: list[CateModel], pseudo, avg_covariates) -> int:
    """Index minimizing the feasible criterion that uses pseudo-outcomes.

    Ties break to the lowest index.
    """
    if not models:
        raise ParameterError("model list must not be empty")
    values = np.asarray(getattr(pseudo, "values", pseudo), dtype=float)
    X = np.atleast_2d(np.asarray(avg_covariates, dtype=float))
    if values.shape[0] != X.shape[0]:
        raise ParameterError("pseudo-outcomes are misaligned with the averaging rows")
    losses = [float(np.mean((values - m.predict(X)) ** 2)) for m in models]
    return int(np.argmin(losses))


@dataclass(frozen=True)
class BoundParams:
    """Constants of the finite-sample guarantee."""

    L: float
    K: int
    delta: float
    alpha: float
    n: int

    def __post_init__(self):
        if self.L < 0 or self.K < 1 or self.n < 1:
            raise ParameterError("L, K and n must be positive")
        if not (0.0 < self.delta < 1.0) or not (0.0 < self.alpha < 1.0):
            raise ParameterError("delta and alpha must lie in (0, 1)")


def regret_bound(params: BoundParams) -> float:
    """12 * L^2 * sqrt(log((K+1)^2 / delta) / (alpha * n))."""
    return 12.0 * params.L**2 * math.sqrt(
        math.log((params.K + 1) ** 2 / params.delta) / (params.alpha * params.n)
    )


def default_regret_roster(seed: int = 0) -> list[CateAlgorithmSpec]:
    """Five inexpensive candidates spanning the frameworks."""
    def rs(kind, label, **params):
        return RegressorSpec(kind=kind, params=params, seed=derive_seed(seed, label))

    return [
        CateAlgorithmSpec(MetaFramework.T_LEARNER, rs(RegressorKind.LASSO, "lasso_t"), label="lasso_t"),
        CateAlgorithmSpec(MetaFramework.S_LEARNER, rs(RegressorKind.CART, "cart_s"), label="cart_s"),
        CateAlgorithmSpec(MetaFramework.T_LEARNER, rs(RegressorKind.KNN, "knn_t"), label="knn_t"),
        CateAlgorithmSpec(MetaFramework.R_LEARNER, rs(RegressorKind.LASSO, "lasso_r"), label="lasso_r"),
        CateAlgorithmSpec(MetaFramework.CONSTANT_DIFF, label="constant"),
    ]


@dataclass(frozen=True)
class RegretTrial:
    """Per-trial losses needed by the bound check and the dominance check."""

    trial: int
    candidate_eval_mse: tuple
    stack_eval_mse: float
    candidate_avg_loss: tuple
    stack_avg_loss: float
    candidate_oracle_avg: tuple
    stack_oracle_avg: float
    plugin_index: int
    violation: bool


@dataclass(frozen=True)
class RegretResult:
    bound: float
    trials: tuple
    violation_rate: float


def _regret_trial(args) -> RegretTrial:
    (trial, dgp, params, seed, p, design, roster, mu_base, mu_fit_mode, eval_size) = args
    L = params.L
    ds, _ = generate_dataset(dgp, params.n, p, design, derive_seed(seed, "data", trial))
    ds_split = split(ds, params.alpha, derive_seed(seed, "split", trial))
    tr = ds_split.train_indices
    roster_t = [
        s.reseed(derive_seed(seed, "lib", trial, i)) if isinstance(s, CateAlgorithmSpec) else s
        for i, s in enumerate(roster)
    ]
    candidates = fit_candidate_library(ds.covariates[tr], ds.outcomes[tr], ds.assignments[tr],
                                       roster_t, p, truncation_bound=L)
    pseudo = build_pseudo_outcomes(ds, ds_split, mu_fit_mode,
                                   mu_base.reseed(derive_seed(seed, "mu", trial)), mu_bound=L)
    Xav = ds.covariates[ds_split.avg_indices]
    problem = build_plugin_problem(candidates, pseudo, Xav)
    weights = solve_stacking(problem, WeightRegime.SIMPLEX)

    # each candidate predicts once per covariate matrix; stacks reuse the columns
    sample = evaluation_sample(dgp, eval_size, derive_seed(seed, "eval", trial))
    P_eval = candidate_matrix(candidates, sample.covariates)
    cand_eval = tuple(float(np.mean((col - sample.true_tau) ** 2)) for col in P_eval.T)
    stack_eval = float(np.mean((P_eval @ weights.weights - sample.true_tau) ** 2))

    K = len(candidates)
    cand_avg = tuple(averaging_loss(problem, np.eye(K)[k]) for k in range(K))
    stack_avg = averaging_loss(problem, weights.weights)

    tau_av = true_tau(dgp, Xav)
    P_av = problem.candidate_matrix
    cand_oracle = tuple(float(np.mean((col - tau_av) ** 2)) for col in P_av.T)
    stack_oracle = float(np.mean((P_av @ weights.weights - tau_av) ** 2))

    plugin_index = int(np.argmin([float(np.mean((pseudo.values - col) ** 2)) for col in P_av.T]))
    violation = stack_eval > min(cand_eval) + regret_bound(params)
    return RegretTrial(trial=trial, candidate_eval_mse=cand_eval, stack_eval_mse=stack_eval,
                       candidate_avg_loss=cand_avg, stack_avg_loss=stack_avg,
                       candidate_oracle_avg=cand_oracle, stack_oracle_avg=stack_oracle,
                       plugin_index=plugin_index,
                       violation=bool(violation))


def regret_experiment(dgp: DgpSpec, params: BoundParams, trials: int, seed: int, *,
                      p: float = 0.5, design: Design = Design.BERNOULLI,
                      roster: list[CateAlgorithmSpec] | None = None,
                      mu_base: RegressorSpec | None = None,
                      mu_fit_mode: MuFitMode = MuFitMode.PER_ARM,
                      eval_size: int = 20000, jobs: int = 1) -> RegretResult:
    """Monte Carlo check of the finite-sample guarantee.

    Each trial samples a fresh experiment, runs the full stacking pipeline
    with candidates and outcome models truncated to [-L, L], and flags a
    violation when the stacked squared error on a large fresh sample
    exceeds the best candidate's by more than the bound.
    """
    if dgp.outcome_bound is None:
        raise ParameterError("regret experiment requires a bounded DGP")
    if dgp.outcome_bound > params.L:
        raise ParameterError("DGP bound exceeds the stated L")
    if trials < 100:
        raise ParameterError("need at least 100 trials for a meaningful rate")
    if eval_size < 20000:
        raise ParameterError("evaluation sample must have at least 20000 points")
    roster = roster if roster is not None else default_regret_roster(seed)
    if len(roster) != params.K:
        raise ParameterError(f"roster has {len(roster)} candidates but params.K = {params.K}")
    if mu_base is None:
        mu_base = RegressorSpec(kind=RegressorKind.LASSO, seed=derive_seed(seed, "mu_base"))
    args = [(t, dgp, params, seed, p, Design(design), roster, mu_base, MuFitMode(mu_fit_mode), eval_size)
            for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_regret_trial, args, chunksize=4))
    else:
        records = [_regret_trial(a) for a in args]
    records.sort(key=lambda r: r.trial)
    rate = sum(r.violation for r in records) / trials
    return RegretResult(bound=regret_bound(params), trials=tuple(records), violation_rate=rate)
