"""Supervised regression primitives, all supporting per-sample weights.

The tree-based kinds (CART, gradient boosting) and the closed-form kinds
(constant mean, ridge, k-nearest-neighbours) are implemented here; lasso,
random forests and kernel ridge delegate to scikit-learn behind the same
interface. Every fit is deterministic given the spec seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.spatial.distance import pdist
from sklearn.ensemble import RandomForestRegressor as _SkForest
from sklearn.kernel_ridge import KernelRidge as _SkKernelRidge
from sklearn.linear_model import LassoCV as _SkLassoCV

from .errors import ParameterError
from .seeding import derive_seed, rng_from
from .trees import RegressionTree, grow_tree, presort_columns


class Regressor:
    """Interface: ``fit(X, y, w)`` then ``predict(X)``.

    ``w`` is an optional nonnegative weight per row; omitting it is the
    same as passing equal weights.
    """

    def fit(self, X, y, w=None) -> "Regressor":
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        raise NotImplementedError


def _check_fit_args(X, y, w):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 1:
        raise ParameterError("cannot fit on zero rows")
    if y.shape != (n,):
        raise ParameterError(f"targets have length {y.shape}, expected ({n},)")
    if w is None:
        w = np.ones(n)
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != (n,):
            raise ParameterError(f"weights have length {w.shape}, expected ({n},)")
        if (w < 0).any():
            raise ParameterError("weights must be nonnegative")
        if not (w > 0).any():
            raise ParameterError("weights must not all be zero")
    return X, y, w


def _unit_mean(w: np.ndarray) -> np.ndarray:
    # library-backed kinds get weights normalized to mean one so that
    # all-equal weights reproduce the unweighted fit exactly
    return w * (w.size / np.cumsum(w)[-1])


class ConstantMeanRegressor(Regressor):
    """Predicts the weighted mean of the training targets everywhere."""

    def fit(self, X, y, w=None):
        X, y, w = _check_fit_args(X, y, w)
        self.mean_ = float(np.cumsum(w * y)[-1] / np.cumsum(w)[-1])
        return self

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.full(X.shape[0], self.mean_)


class RidgeRegressor(Regressor):
    """Weighted ridge regression with an unpenalized intercept.

    The Gram matrix is accumulated sequentially so a weight-2 leading row
    and a duplicated leading row produce bit-identical coefficients.
    """

    def __init__(self, penalty: float = 0.0):
        if penalty < 0:
            raise ParameterError("penalty must be nonnegative")
        self.penalty = penalty

    def fit(self, X, y, w=None):
        X, y, w = _check_fit_args(X, y, w)
        A = np.hstack([np.ones((X.shape[0], 1)), X])
        G = np.cumsum(w[:, None, None] * A[:, :, None] * A[:, None, :], axis=0)[-1]
        b = np.cumsum((w * y)[:, None] * A, axis=0)[-1]
        if self.penalty > 0:
            G = G + self.penalty * np.diag([0.0] + [1.0] * X.shape[1])
        try:
            self.coef_ = np.linalg.solve(G, b)
        except np.linalg.LinAlgError:
            self.coef_ = np.linalg.lstsq(G, b, rcond=None)[0]
        return self

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.coef_[0] + X @ self.coef_[1:]


class CartRegressor(Regressor):
    """Single regression tree with exhaustive, deterministic split search."""

    def __init__(self, max_depth: int = 6, min_leaf: float = 5):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X, y, w=None):
        X, y, w = _check_fit_args(X, y, w)
        self.tree_ = grow_tree(X, y, w, self.max_depth, self.min_leaf)
        return self

    def predict(self, X):
        return self.tree_.predict(X)


class BoostingRegressor(Regressor):
    """Least-squares gradient boosting over shallow regression trees."""

    def __init__(self, n_rounds: int = 100, learning_rate: float = 0.1,
                 max_depth: int = 3, min_leaf: float = 1):
        if n_rounds < 1:
            raise ParameterError("n_rounds must be at least 1")
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X, y, w=None):
        X, y, w = _check_fit_args(X, y, w)
        orders = presort_columns(X)
        self.init_ = float(np.cumsum(w * y)[-1] / np.cumsum(w)[-1])
        self.trees_: list[RegressionTree] = []
        current = np.full(X.shape[0], self.init_)
        for _ in range(self.n_rounds):
            tree = grow_tree(X, y - current, w, self.max_depth, self.min_leaf, orders=orders)
            self.trees_.append(tree)
            current = current + self.learning_rate * tree.predict(X)
        return self

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], self.init_)
        for tree in self.trees_:
            out = out + self.learning_rate * tree.predict(X)
        return out

    def staged_predictions(self, X) -> np.ndarray:
        """Predictions after 0, 1, ..., n_rounds rounds; shape (rounds+1, q)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        stages = np.empty((len(self.trees_) + 1, X.shape[0]))
        stages[0] = self.init_
        for r, tree in enumerate(self.trees_, start=1):
            stages[r] = stages[r - 1] + self.learning_rate * tree.predict(X)
        return stages


class KnnRegressor(Regressor):
    """k-nearest-neighbour regression, weighted mean over the neighbourhood.

    Neighbours are chosen by (distance, training index) so ties are stable.
    """

    def __init__(self, k: int = 10):
        if k < 1:
            raise ParameterError("k must be at least 1")
        self.k = k

    def fit(self, X, y, w=None):
        X, y, w = _check_fit_args(X, y, w)
        self.X_, self.y_, self.w_ = X, y, w
        return self

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k = min(self.k, self.X_.shape[0])
        # ||a-b||^2 expansion keeps memory at (q, n) instead of (q, n, d)
        d2 = ((X**2).sum(axis=1)[:, None] + (self.X_**2).sum(axis=1)[None, :]
              - 2.0 * (X @ self.X_.T))
        nbrs = np.argsort(d2, axis=1, kind="stable")[:, :k]
        wn = self.w_[nbrs]
        totals = wn.sum(axis=1)
        fallback = totals <= 0
        if fallback.any():
            wn[fallback] = 1.0
            totals = wn.sum(axis=1)
        return (wn * self.y_[nbrs]).sum(axis=1) / totals


class LassoRegressor(Regressor):
    """L1-penalized linear regression; penalty chosen by internal k-fold CV."""

    def __init__(self, n_penalties: int = 50, cv_folds: int = 5, max_iter: int = 5000):
        self.n_penalties = n_penalties
        self.cv_folds = cv_folds
        self.max_iter = max_iter

    def fit(self, X, y, w=None):
        X, y, w = _check_fit_args(X, y, w)
        self.model_ = _SkLassoCV(alphas=self.n_penalties, cv=self.cv_folds,
                                 max_iter=self.max_iter)
        self.model_.fit(X, y, sample_weight=_unit_mean(w))
        return self

    def predict(self, X):
        return self.model_.predict(np.atleast_2d(np.asarray(X, dtype=float)))


class ForestRegressor(Regressor):
    """Random forest of fully grown trees; prediction is the mean over trees."""

    def __init__(self, n_trees: int = 200, mtry: int | None = None,
                 min_leaf: int = 5, seed: int = 0):
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_leaf = min_leaf
        self.seed = seed

    def fit(self, X, y, w=None):
        X, y, w = _check_fit_args(X, y, w)
        mtry = self.mtry if self.mtry is not None else math.ceil(X.shape[1] / 3)
        self.model_ = _SkForest(
            n_estimators=self.n_trees,
            max_features=min(mtry, X.shape[1]),
            min_samples_leaf=self.min_leaf,
            random_state=self.seed % 2**32,
            n_jobs=1,
        )
        self.model_.fit(X, y, sample_weight=_unit_mean(w))
        return self

    def predict(self, X):
        return self.model_.predict(np.atleast_2d(np.asarray(X, dtype=float)))

    def tree_predictions(self, X) -> np.ndarray:
        """Per-tree predictions, shape (n_trees, q); their mean is predict()."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([t.predict(X) for t in self.model_.estimators_])


class KernelRidgeRegressor(Regressor):
    """Gaussian-kernel ridge regression.

    The bandwidth defaults to the median pairwise distance of the training
    covariates.
    """

    def __init__(self, penalty: float = 1.0, bandwidth: float | None = None):
        self.penalty = penalty
        self.bandwidth = bandwidth

    def fit(self, X, y, w=None):
        X, y, w = _check_fit_args(X, y, w)
        bw = self.bandwidth
        if bw is None:
            bw = float(np.median(pdist(X))) if X.shape[0] > 1 else 1.0
            if bw <= 0:
                bw = 1.0
        self.bandwidth_ = bw
        self.model_ = _SkKernelRidge(alpha=self.penalty, kernel="rbf",
                                     gamma=1.0 / (2.0 * bw * bw))
        self.model_.fit(X, y, sample_weight=_unit_mean(w))
        return self

    def predict(self, X):
        return self.model_.predict(np.atleast_2d(np.asarray(X, dtype=float)))


class ClippedRegressor(Regressor):
    """Wraps a fitted regressor and clips its predictions to [-bound, bound]."""

    def __init__(self, inner: Regressor, bound: float):
        self.inner = inner
        self.bound = float(bound)

    def fit(self, X, y, w=None):
        self.inner.fit(X, y, w)
        return self

    def predict(self, X):
        return np.clip(self.inner.predict(X), -self.bound, self.bound)


class RegressorKind(str, Enum):
    RIDGE = "ridge"
    LASSO = "lasso"
    CART = "cart"
    RANDOM_FOREST = "random_forest"
    GRADIENT_BOOSTING = "gradient_boosting"
    KNN = "knn"
    KERNEL_RIDGE = "kernel_ridge"
    CONSTANT_MEAN = "constant_mean"


_ALLOWED_PARAMS = {
    RegressorKind.RIDGE: {"penalty"},
    RegressorKind.LASSO: {"n_penalties", "cv_folds", "max_iter"},
    RegressorKind.CART: {"max_depth", "min_leaf"},
    RegressorKind.RANDOM_FOREST: {"n_trees", "mtry", "min_leaf"},
    RegressorKind.GRADIENT_BOOSTING: {"n_rounds", "learning_rate", "max_depth", "min_leaf"},
    RegressorKind.KNN: {"k"},
    RegressorKind.KERNEL_RIDGE: {"penalty", "bandwidth"},
    RegressorKind.CONSTANT_MEAN: set(),
}


@dataclass(frozen=True)
class RegressorSpec:
    """A reproducible recipe for a regressor: kind, hyperparameters, seed.

    Kinds without internal randomness ignore the seed.
    """

    kind: RegressorKind
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        kind = RegressorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        unknown = set(self.params) - _ALLOWED_PARAMS[kind]
        if unknown:
            raise ParameterError(f"unknown hyperparameters for {kind.value}: {sorted(unknown)}")

    def build(self) -> Regressor:
        kind = self.kind
        if kind == RegressorKind.RIDGE:
            return RidgeRegressor(**self.params)
        if kind == RegressorKind.LASSO:
            return LassoRegressor(**self.params)
        if kind == RegressorKind.CART:
            return CartRegressor(**self.params)
        if kind == RegressorKind.RANDOM_FOREST:
            return ForestRegressor(seed=self.seed, **self.params)
        if kind == RegressorKind.GRADIENT_BOOSTING:
            return BoostingRegressor(**self.params)
        if kind == RegressorKind.KNN:
            return KnnRegressor(**self.params)
        if kind == RegressorKind.KERNEL_RIDGE:
            return KernelRidgeRegressor(**self.params)
        return ConstantMeanRegressor()

    def reseed(self, seed: int) -> "RegressorSpec":
        return replace(self, seed=seed)

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "params": dict(sorted(self.params.items())), "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "RegressorSpec":
        return cls(kind=RegressorKind(obj["kind"]), params=dict(obj.get("params", {})),
                   seed=int(obj.get("seed", 0)))


def fit_regressor(base, X, y, w=None) -> Regressor:
    """Fit a regressor from a RegressorSpec or a zero-argument factory."""
    if isinstance(base, RegressorSpec):
        model = base.build()
    elif callable(base):
        model = base()
    else:
        raise ParameterError(f"expected RegressorSpec or factory, got {type(base).__name__}")
    return model.fit(X, y, w)


def reseed_base(base, *tags):
    """Derive a child seed for a spec; factories pass through unchanged."""
    if isinstance(base, RegressorSpec):
        return base.reseed(derive_seed(base.seed, *tags))
    return base


def kfold_indices(n: int, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled k-fold (train, test) index pairs; deterministic given seed."""
    if folds < 2:
        raise ParameterError("need at least 2 folds")
    if folds > n:
        raise ParameterError(f"folds={folds} exceeds n={n}")
    perm = rng_from(seed, "kfold").permutation(n)
    parts = np.array_split(perm, folds)
    out = []
    for i in range(folds):
        test = np.sort(parts[i])
        train = np.sort(np.concatenate([parts[j] for j in range(folds) if j != i]))
        out.append((train, test))
    return out


def cross_val_mse(spec: RegressorSpec, X, y, folds: int, seed: int) -> float:
    """Mean held-out squared error over shuffled k folds."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    fold_mses = []
    for train, test in kfold_indices(X.shape[0], folds, seed):
        model = fit_regressor(spec, X[train], y[train])
        resid = y[test] - model.predict(X[test])
        fold_mses.append(float(np.mean(resid**2)))
    return float(np.mean(fold_mses))
