"""Aggregation of candidate effect models by constrained least squares.

Three weight regimes are supported: the probability simplex (nonnegative,
sum one), the nonnegative orthant, and fully unconstrained. Constrained
problems are solved by accelerated projected gradient descent with an exact
simplex projection and a KKT-residual stopping certificate; the
unconstrained problem is solved in closed form with a ridge jitter when the
normal matrix is numerically singular.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConvergenceError, ParameterError
from .metalearners import CateModel
from .regressors import Regressor


class WeightRegime(str, Enum):
    SIMPLEX = "simplex"
    NONNEGATIVE = "nonnegative"
    UNCONSTRAINED = "unconstrained"


_REGIME_ALIASES = {
    "simplex": WeightRegime.SIMPLEX,
    "nonneg_sum_one": WeightRegime.SIMPLEX,
    "nonnegative": WeightRegime.NONNEGATIVE,
    "nonneg": WeightRegime.NONNEGATIVE,
    "unconstrained": WeightRegime.UNCONSTRAINED,
}


def parse_regime(name) -> WeightRegime:
    if isinstance(name, WeightRegime):
        return name
    try:
        return _REGIME_ALIASES[str(name).lower().replace("-", "_")]
    except KeyError:
        raise ParameterError(f"unknown weight regime: {name!r}") from None


@dataclass(frozen=True)
class WeightVector:
    """Aggregation weights plus solver diagnostics."""

    weights: np.ndarray
    regime: WeightRegime
    loss: float | None = None
    kkt_residual: float | None = None
    iterations: int | None = None
    singular: bool = False
    jitter: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not np.isfinite(w).all():
            raise ParameterError("weights must be finite")
        regime = parse_regime(self.regime)
        if regime in (WeightRegime.SIMPLEX, WeightRegime.NONNEGATIVE) and (w < 0).any():
            raise ParameterError(f"{regime.value} weights must be nonnegative")
        if regime == WeightRegime.SIMPLEX and abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError(f"simplex weights must sum to one, got {w.sum()!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "regime", regime)

    def to_json(self) -> dict:
        return {
            "weights": [float(v) for v in self.weights],
            "regime": self.regime.value,
            "loss": self.loss,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "singular": self.singular,
            "jitter": self.jitter,
        }


@dataclass(frozen=True)
class StackingProblem:
    """Weighted least-squares data: per-row candidate predictions and targets."""

    candidate_matrix: np.ndarray
    target: np.ndarray
    row_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.candidate_matrix, dtype=float))
        t = np.asarray(self.target, dtype=float)
        r = np.ones(T.shape[0]) if self.row_weights is None else np.asarray(self.row_weights, dtype=float)
        if T.shape[0] < 1 or T.shape[1] < 1:
            raise ParameterError("need at least one row and one candidate")
        if t.shape != (T.shape[0],) or r.shape != (T.shape[0],):
            raise ParameterError("target and row weights must match the candidate matrix rows")
        if not (np.isfinite(T).all() and np.isfinite(t).all() and np.isfinite(r).all()):
            raise ParameterError("stacking problem entries must be finite")
        if (r < 0).any():
            raise ParameterError("row weights must be nonnegative")
        object.__setattr__(self, "candidate_matrix", T)
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "row_weights", r)

    @property
    def n_rows(self) -> int:
        return self.candidate_matrix.shape[0]

    @property
    def n_candidates(self) -> int:
        return self.candidate_matrix.shape[1]


def averaging_loss(problem: StackingProblem, w) -> float:
    """Mean weighted squared residual of the stacked prediction.

    The single source of truth for loss values: the solver, the reports and
    the dominance checks all call this.
    """
    resid = problem.target - problem.candidate_matrix @ np.asarray(w, dtype=float)
    return float(np.mean(problem.row_weights * resid * resid))


def candidate_matrix(candidates: list[CateModel], X) -> np.ndarray:
    """Stack candidate predictions on X into an (n, K) matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.column_stack([m.predict(X) for m in candidates])


def build_plugin_problem(candidates: list[CateModel], pseudo_values, X_avg) -> StackingProblem:
    """Unweighted problem matching candidates to pseudo-outcomes on the averaging rows."""
    values = np.asarray(getattr(pseudo_values, "values", pseudo_values), dtype=float)
    T = candidate_matrix(candidates, X_avg)
    if values.shape[0] != T.shape[0]:
        raise ParameterError("pseudo-outcomes are misaligned with the averaging rows")
    return StackingProblem(candidate_matrix=T, target=values)


def build_r_stacking_problem(X_avg, y_avg, z_avg, candidates: list[CateModel],
                             mu_model: Regressor, p: float) -> StackingProblem:
    """Residual-on-residual loss encoded as a weighted least-squares problem.

    Row weights (z - p)^2 and targets (y - mu(x)) / (z - p) make the
    weighted loss equal the residual objective divided by the row count,
    identically in w. ``mu_model`` must have been fitted on training rows
    only.
    """
    if not (0.0 < p < 1.0):
        raise ParameterError(f"p must lie strictly inside (0, 1), got {p}")
    X_avg = np.atleast_2d(np.asarray(X_avg, dtype=float))
    y_avg = np.asarray(y_avg, dtype=float)
    z_avg = np.asarray(z_avg, dtype=float)
    shift = z_avg - p
    targets = (y_avg - mu_model.predict(X_avg)) / shift
    return StackingProblem(candidate_matrix=candidate_matrix(candidates, X_avg),
                           target=targets, row_weights=shift**2)


def gram(problem: StackingProblem) -> np.ndarray:
    """(K+1)x(K+1) second-moment matrix of (target, candidates) rows.

    Only defined for unit row weights. Entry (0, 0) is the mean squared
    target; the plug-in loss satisfies l(w) = g(w)' M g(w) with
    g(w) = (1, -w).
    """
    if not np.all(problem.row_weights == 1.0):
        raise ParameterError("gram() requires unit row weights")
    M = np.column_stack([problem.target, problem.candidate_matrix])
    return (M.T @ M) / problem.n_rows


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum(w) = 1}."""
    v = np.asarray(v, dtype=float)
    if not np.isfinite(v).all():
        raise ParameterError("cannot project a non-finite vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / ks > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _power_iteration_lmax(A: np.ndarray, steps: int = 100) -> float:
    """Largest eigenvalue of a PSD matrix by fixed-step power iteration."""
    k = A.shape[0]
    v = np.full(k, 1.0 / np.sqrt(k))
    for _ in range(steps):
        av = A @ v
        norm = np.linalg.norm(av)
        if norm == 0.0:
            return 0.0
        v = av / norm
    return float(v @ A @ v)


def _kkt_residual(w, grad, project) -> float:
    return float(np.max(np.abs(w - project(w - grad))))


def _polish(A, b, w, regime: WeightRegime):
    """Exact solve on the active face identified by the iterate.

    Simplex: equality-constrained least squares on the support. Nonnegative:
    minimum-norm solve on the support. Returns None if the polished point
    leaves the feasible set.
    """
    support = np.flatnonzero(w > 0.0)
    k = w.size
    if regime == WeightRegime.SIMPLEX:
        s = support.size
        kkt = np.zeros((s + 1, s + 1))
        kkt[:s, :s] = 2.0 * A[np.ix_(support, support)]
        kkt[:s, s] = 1.0
        kkt[s, :s] = 1.0
        rhs = np.concatenate([2.0 * b[support], [1.0]])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        ws = sol[:s]
    else:
        ws = np.linalg.lstsq(A[np.ix_(support, support)], b[support], rcond=None)[0]
    if (ws < 0.0).any():
        return None
    out = np.zeros(k)
    out[support] = ws
    if regime == WeightRegime.SIMPLEX and abs(out.sum() - 1.0) > 1e-9:
        return None
    return out


def solve_stacking(problem: StackingProblem, regime, tol: float = 1e-10,
                   max_iter: int = 50000) -> WeightVector:
    """Minimize the weighted least-squares loss over the regime's feasible set.

    Constrained regimes run accelerated projected gradient descent from the
    uniform point with adaptive restarts, stop once the unit-step projected
    gradient residual falls below ``tol``, and then attempt an exact solve
    on the identified active face. In the simplex regime the returned point
    is additionally guaranteed (by direct comparison) to lose to no single
    candidate on the averaging loss. Reported losses come from
    ``averaging_loss``.
    """
    regime = parse_regime(regime)
    if tol <= 0:
        raise ParameterError("tol must be positive")
    T, t, r = problem.candidate_matrix, problem.target, problem.row_weights
    m, K = T.shape
    A = (T * r[:, None]).T @ T / m
    b = T.T @ (r * t) / m

    if regime == WeightRegime.UNCONSTRAINED:
        eigs = np.linalg.eigvalsh(A)
        singular = eigs[0] <= eigs[-1] * 1e-12
        jitter = 0.0
        A_solve = A
        if singular:
            # jitter stated on the normal-matrix scale trace(T' W T) / K
            jitter = 1e-10 * float(np.trace(A)) * m / K
            A_solve = A + (jitter / m) * np.eye(K)
        try:
            w = np.linalg.solve(A_solve, b)
        except np.linalg.LinAlgError:
            # zero normal matrix: fall back to the minimum-norm solution
            w = np.linalg.lstsq(A_solve, b, rcond=None)[0]
        residual = float(np.max(np.abs(2.0 * (A_solve @ w - b))))
        return WeightVector(weights=w, regime=regime, loss=averaging_loss(problem, w),
                            kkt_residual=residual, iterations=0,
                            singular=bool(singular), jitter=jitter)

    if regime == WeightRegime.SIMPLEX:
        project = project_simplex
    else:
        def project(v):
            return np.maximum(v, 0.0)

    lip = max(2.0 * _power_iteration_lmax(A), 1e-300)
    step = 1.0 / lip

    def grad(w):
        return 2.0 * (A @ w - b)

    def fval(w):
        return float(w @ A @ w - 2.0 * b @ w)

    def try_polish(w):
        polished = _polish(A, b, w, regime)
        if polished is not None and (
            _kkt_residual(polished, grad(polished), project) <= _kkt_residual(w, grad(w), project)
        ):
            return polished
        return w

    w = project(np.full(K, 1.0 / K))
    momentum = w.copy()
    theta = 1.0
    f_prev = fval(w)
    iterations = 0
    converged = _kkt_residual(w, grad(w), project) <= tol
    while not converged and iterations < max_iter:
        iterations += 1
        w_next = project(momentum - step * grad(momentum))
        f_next = fval(w_next)
        if f_next > f_prev:
            # adaptive restart: drop momentum and retake the step from w
            momentum = w
            theta = 1.0
            w_next = project(momentum - step * grad(momentum))
            f_next = fval(w_next)
        theta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        momentum = w_next + ((theta - 1.0) / theta_next) * (w_next - w)
        w, theta, f_prev = w_next, theta_next, f_next
        if _kkt_residual(w, grad(w), project) <= tol:
            converged = True
        elif iterations % 500 == 0:
            # an exact solve on the identified face often finishes off a slow tail
            w = try_polish(w)
            converged = _kkt_residual(w, grad(w), project) <= tol
    if not converged:
        w = try_polish(w)
        final = _kkt_residual(w, grad(w), project)
        if final > tol:
            raise ConvergenceError(f"stacking solver did not converge in {max_iter} iterations", final)
    w = try_polish(w)

    if regime == WeightRegime.SIMPLEX:
        # never lose to a single candidate on the direct averaging loss
        loss_w = averaging_loss(problem, w)
        vertex_losses = [averaging_loss(problem, np.eye(K)[k]) for k in range(K)]
        best_vertex = int(np.argmin(vertex_losses))
        if vertex_losses[best_vertex] < loss_w:
            w = np.eye(K)[best_vertex]

    return WeightVector(weights=w, regime=regime, loss=averaging_loss(problem, w),
                        kkt_residual=_kkt_residual(w, grad(w), project),
                        iterations=iterations)


class StackedCateModel:
    """Weighted combination of candidate effect models."""

    def __init__(self, weights: WeightVector, candidates: list[CateModel]):
        if weights.weights.size != len(candidates):
            raise ParameterError("one weight per candidate is required")
        self.weights = weights
        self.candidates = candidates

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        q = np.atleast_2d(x)
        out = np.zeros(q.shape[0])
        for wk, model in zip(self.weights.weights, self.candidates):
            out = out + wk * model.predict(q)
        return float(out[0]) if single else out
