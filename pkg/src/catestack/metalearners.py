"""Recipes that turn base regressors into treatment-effect estimators.

Covers the S-, T-, X- and R-learner frameworks plus the constant
difference-in-means baseline, and assembles libraries of candidate models
from declarative specs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import ArmEmptyError, CandidateFitError, ParameterError
from .regressors import RegressorKind, RegressorSpec, fit_regressor, reseed_base
from .seeding import derive_seed


class CateModel:
    """A fitted treatment-effect predictor.

    ``predict`` accepts a single covariate row or a matrix and returns a
    scalar or a vector accordingly. If ``truncation_bound`` is set, every
    prediction is clipped to [-bound, bound]. ``parts`` exposes the fitted
    stage models for inspection.
    """

    def __init__(self, predict_fn, label: str, truncation_bound: float | None = None,
                 parts: dict | None = None):
        self._predict_fn = predict_fn
        self.label = label
        self.truncation_bound = truncation_bound
        self.parts = parts or {}

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = np.asarray(self._predict_fn(np.atleast_2d(x)), dtype=float)
        if self.truncation_bound is not None:
            out = np.clip(out, -self.truncation_bound, self.truncation_bound)
        return float(out[0]) if single else out

    def truncated(self, bound: float) -> "CateModel":
        return CateModel(self._predict_fn, self.label, truncation_bound=bound, parts=self.parts)


class MetaFramework(str, Enum):
    S_LEARNER = "s_learner"
    T_LEARNER = "t_learner"
    X_LEARNER = "x_learner"
    R_LEARNER = "r_learner"
    CONSTANT_DIFF = "constant_diff"


def _split_arms(X, y, z):
    z = np.asarray(z)
    treated = z == 1
    if not treated.any() or treated.all():
        raise ArmEmptyError("both treated and control rows are required")
    return treated


def fit_t_learner(X, y, z, base) -> CateModel:
    """Separate outcome fits per arm; the effect is their difference."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    treated = _split_arms(X, y, z)
    m1 = fit_regressor(reseed_base(base, "treated"), X[treated], y[treated])
    m0 = fit_regressor(reseed_base(base, "control"), X[~treated], y[~treated])
    return CateModel(lambda q: m1.predict(q) - m0.predict(q), "t_learner",
                     parts={"mu1": m1, "mu0": m0})


def fit_s_learner(X, y, z, base) -> CateModel:
    """One fit on covariates with the assignment appended as a feature."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    _split_arms(X, y, z)
    m = fit_regressor(base, np.hstack([X, z[:, None]]), y)

    def predict(q):
        ones = np.ones((q.shape[0], 1))
        return m.predict(np.hstack([q, ones])) - m.predict(np.hstack([q, 0.0 * ones]))

    return CateModel(predict, "s_learner", parts={"mu": m})


def fit_x_learner(X, y, z, base, p: float) -> CateModel:
    """Two-stage imputation learner blended by the assignment probability.

    Stage one fits per-arm outcome models; stage two regresses the imputed
    individual effects on covariates within each arm; the final model is
    (1-p) * gamma1 + p * gamma0.
    """
    if not (0.0 < p < 1.0):
        raise ParameterError(f"p must lie strictly inside (0, 1), got {p}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    treated = _split_arms(X, y, z)
    m1 = fit_regressor(reseed_base(base, "stage1", "treated"), X[treated], y[treated])
    m0 = fit_regressor(reseed_base(base, "stage1", "control"), X[~treated], y[~treated])
    d1 = y[treated] - m0.predict(X[treated])
    d0 = m1.predict(X[~treated]) - y[~treated]
    g1 = fit_regressor(reseed_base(base, "stage2", "treated"), X[treated], d1)
    g0 = fit_regressor(reseed_base(base, "stage2", "control"), X[~treated], d0)
    return CateModel(lambda q: (1.0 - p) * g1.predict(q) + p * g0.predict(q), "x_learner",
                     parts={"mu1": m1, "mu0": m0, "gamma1": g1, "gamma0": g0})


def fit_r_learner(X, y, z, outcome_base, effect_base, p: float) -> CateModel:
    """Residual-on-residual learner using the known design probability.

    The effect model minimizes the weighted least-squares objective with
    targets (y - mu(x)) / (z - p) and weights (z - p)^2; p is never
    estimated.
    """
    if not (0.0 < p < 1.0):
        raise ParameterError(f"p must lie strictly inside (0, 1), got {p}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    _split_arms(X, y, z)
    mu = fit_regressor(reseed_base(outcome_base, "outcome"), X, y)
    shift = z - p
    targets = (y - mu.predict(X)) / shift
    tau = fit_regressor(reseed_base(effect_base, "effect"), X, targets, w=shift**2)
    return CateModel(lambda q: tau.predict(q), "r_learner", parts={"mu": mu, "tau": tau})


def fit_constant_diff(y, z) -> CateModel:
    """Difference in mean outcomes between treated and control rows."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z)
    treated = z == 1
    if not treated.any() or treated.all():
        raise ArmEmptyError("both treated and control rows are required")
    diff = float(y[treated].mean() - y[~treated].mean())
    return CateModel(lambda q: np.full(q.shape[0], diff), "constant_diff")


def r_objective(y, z, p, mu_hat, tau_hat) -> float:
    """Weighted least-squares objective value of the R-learner effect fit."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    shift = z - p
    return float(np.sum(shift**2 * ((y - mu_hat) / shift - tau_hat) ** 2))


@dataclass(frozen=True)
class CateAlgorithmSpec:
    """Declarative recipe for one candidate: framework, base spec(s), label."""

    framework: MetaFramework
    base: RegressorSpec | None = None
    outcome_base: RegressorSpec | None = None
    label: str = ""

    def __post_init__(self):
        framework = MetaFramework(self.framework)
        object.__setattr__(self, "framework", framework)
        if framework != MetaFramework.CONSTANT_DIFF and self.base is None:
            raise ParameterError(f"{framework.value} requires a base regressor spec")
        if not self.label:
            object.__setattr__(self, "label", framework.value)

    def reseed(self, seed: int) -> "CateAlgorithmSpec":
        out = self
        if self.base is not None:
            out = replace(out, base=self.base.reseed(derive_seed(seed, "base")))
        if self.outcome_base is not None:
            out = replace(out, outcome_base=self.outcome_base.reseed(derive_seed(seed, "outcome")))
        return out

    def to_json(self) -> dict:
        obj = {"framework": self.framework.value, "label": self.label}
        if self.base is not None:
            obj["base"] = self.base.to_json()
        if self.outcome_base is not None:
            obj["outcome_base"] = self.outcome_base.to_json()
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "CateAlgorithmSpec":
        return cls(
            framework=MetaFramework(obj["framework"]),
            base=RegressorSpec.from_json(obj["base"]) if "base" in obj else None,
            outcome_base=RegressorSpec.from_json(obj["outcome_base"]) if "outcome_base" in obj else None,
            label=obj.get("label", ""),
        )


def fit_cate_algorithm(spec: CateAlgorithmSpec, X, y, z, p: float) -> CateModel:
    fw = spec.framework
    if fw == MetaFramework.T_LEARNER:
        model = fit_t_learner(X, y, z, spec.base)
    elif fw == MetaFramework.S_LEARNER:
        model = fit_s_learner(X, y, z, spec.base)
    elif fw == MetaFramework.X_LEARNER:
        model = fit_x_learner(X, y, z, spec.base, p)
    elif fw == MetaFramework.R_LEARNER:
        outcome = spec.outcome_base if spec.outcome_base is not None else spec.base
        model = fit_r_learner(X, y, z, outcome, spec.base, p)
    else:
        model = fit_constant_diff(y, z)
    model.label = spec.label
    return model


def fit_candidate_library(X, y, z, specs, p: float, truncation_bound: float | None = None) -> list[CateModel]:
    """Fit one model per spec, order preserved.

    Entries may be CateAlgorithmSpec values or callables ``(X, y, z, p) ->
    CateModel`` (useful for injecting reference models in experiments).
    Failures are re-raised with the model label attached.
    """
    if not specs:
        raise ParameterError("candidate library must not be empty")
    models = []
    for k, spec in enumerate(specs):
        label = spec.label if isinstance(spec, CateAlgorithmSpec) else getattr(spec, "label", f"candidate_{k}")
        try:
            if isinstance(spec, CateAlgorithmSpec):
                model = fit_cate_algorithm(spec, X, y, z, p)
            else:
                model = spec(X, y, z, p)
        except Exception as exc:
            raise CandidateFitError(label, str(exc)) from exc
        if truncation_bound is not None:
            model = model.truncated(truncation_bound)
        models.append(model)
    return models


def default_roster(seed: int = 0) -> list[CateAlgorithmSpec]:
    """The nine-model candidate library used throughout the benchmark.

    Gaussian kernel ridge stands in for Gaussian-kernel support vector
    regression as the first S-learner base.
    """
    def spec(kind, label, **params):
        return RegressorSpec(kind=kind, params=params, seed=derive_seed(seed, label))

    return [
        CateAlgorithmSpec(MetaFramework.S_LEARNER, spec(RegressorKind.KERNEL_RIDGE, "kernel_ridge_s"),
                          label="kernel_ridge_s"),
        CateAlgorithmSpec(MetaFramework.T_LEARNER, spec(RegressorKind.GRADIENT_BOOSTING, "boosting_t"),
                          label="boosting_t"),
        CateAlgorithmSpec(MetaFramework.T_LEARNER, spec(RegressorKind.RANDOM_FOREST, "forest_t"),
                          label="forest_t"),
        CateAlgorithmSpec(MetaFramework.S_LEARNER, spec(RegressorKind.CART, "cart_s"),
                          label="cart_s"),
        CateAlgorithmSpec(MetaFramework.T_LEARNER, spec(RegressorKind.LASSO, "lasso_t"),
                          label="lasso_t"),
        CateAlgorithmSpec(MetaFramework.X_LEARNER, spec(RegressorKind.RANDOM_FOREST, "forest_x"),
                          label="forest_x"),
        CateAlgorithmSpec(MetaFramework.R_LEARNER, spec(RegressorKind.GRADIENT_BOOSTING, "boosting_r"),
                          label="boosting_r"),
        CateAlgorithmSpec(MetaFramework.R_LEARNER, spec(RegressorKind.LASSO, "lasso_r"),
                          label="lasso_r"),
        CateAlgorithmSpec(MetaFramework.CONSTANT_DIFF, label="constant"),
    ]


def roster_to_json(specs: list[CateAlgorithmSpec]) -> list[dict]:
    return [s.to_json() for s in specs]


def roster_from_json(items: list[dict]) -> list[CateAlgorithmSpec]:
    return [CateAlgorithmSpec.from_json(o) for o in items]
