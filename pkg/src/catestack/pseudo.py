"""Doubly-robust per-unit effect estimates on the averaging set.

The pseudo-outcome combines an outcome-model difference with inverse-
probability-weighted residual corrections; its expectation over the
assignment equals the unit's true effect for any outcome models, which
``enumerate_conditional_mean`` verifies by exact enumeration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import DataSplit, ExperimentDataset
from .errors import ArmEmptyError, ParameterError
from .regressors import ClippedRegressor, Regressor, fit_regressor, reseed_base


def aipw_pseudo_outcome(y, z, mu1x, mu0x, p):
    """Per-unit effect estimate; broadcasts over array inputs.

    value = [mu1(x) - mu0(x)] + (y - mu1(x)) * z / p - (y - mu0(x)) * (1 - z) / (1 - p)
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    mu1x = np.asarray(mu1x, dtype=float)
    mu0x = np.asarray(mu0x, dtype=float)
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ParameterError("p must lie strictly inside (0, 1)")
    out = (mu1x - mu0x) + (y - mu1x) * z / p_arr - (y - mu0x) * (1.0 - z) / (1.0 - p_arr)
    return out if out.ndim else float(out)


def enumerate_conditional_mean(y1, y0, mu1x, mu0x, p):
    """Exact expectation of the pseudo-outcome over the assignment draw.

    Blends the two assignment branches with their probabilities; equals
    y1 - y0 identically, for any outcome-model values.
    """
    p_arr = np.asarray(p, dtype=float)
    branch1 = aipw_pseudo_outcome(y1, 1.0, mu1x, mu0x, p)
    branch0 = aipw_pseudo_outcome(y0, 0.0, mu1x, mu0x, p)
    out = p_arr * branch1 + (1.0 - p_arr) * branch0
    return out if out.ndim else float(out)


class MuFitMode(str, Enum):
    PER_ARM = "per_arm"
    AUGMENTED = "augmented"


class _AugmentedSlice(Regressor):
    """View of a single augmented-model fit at a fixed assignment value."""

    def __init__(self, inner: Regressor, z_value: float):
        self.inner = inner
        self.z_value = z_value

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        col = np.full((X.shape[0], 1), self.z_value)
        return self.inner.predict(np.hstack([X, col]))


@dataclass(frozen=True)
class PseudoOutcomeVector:
    """Pseudo-outcomes over the averaging set plus the models behind them."""

    values: np.ndarray
    mu1_model: Regressor
    mu0_model: Regressor
    p: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.isfinite(values).all():
            raise ParameterError("pseudo-outcomes must be finite")
        object.__setattr__(self, "values", values)

    def write_csv(self, path, indices=None) -> None:
        """Export (index, value) rows for debugging."""
        idx = np.arange(self.values.size) if indices is None else np.asarray(indices)
        with open(Path(path), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "value"])
            for i, v in zip(idx, self.values):
                writer.writerow([int(i), repr(float(v))])


def build_pseudo_outcomes(
    ds: ExperimentDataset,
    data_split: DataSplit,
    mu_fit_mode: MuFitMode,
    base,
    mu_bound: float | None = None,
) -> PseudoOutcomeVector:
    """Fit outcome models on the training rows only, then score the averaging rows.

    ``mu_fit_mode`` selects per-arm fits or a single fit on covariates
    augmented with the assignment. ``mu_bound`` optionally clips model
    predictions to [-bound, bound]; the pseudo-outcome stays conditionally
    unbiased under any such clipping. The design probability is always
    used, never the realized treated fraction.
    """
    mu_fit_mode = MuFitMode(mu_fit_mode)
    tr = data_split.train_indices
    Xtr, ytr, ztr = ds.covariates[tr], ds.outcomes[tr], ds.assignments[tr]
    treated = ztr == 1
    if not treated.any() or treated.all():
        raise ArmEmptyError("training rows must contain both arms")
    if mu_fit_mode == MuFitMode.PER_ARM:
        mu1 = fit_regressor(reseed_base(base, "mu1"), Xtr[treated], ytr[treated])
        mu0 = fit_regressor(reseed_base(base, "mu0"), Xtr[~treated], ytr[~treated])
    else:
        m = fit_regressor(reseed_base(base, "mu_aug"), np.hstack([Xtr, ztr[:, None].astype(float)]), ytr)
        mu1, mu0 = _AugmentedSlice(m, 1.0), _AugmentedSlice(m, 0.0)
    if mu_bound is not None:
        mu1, mu0 = ClippedRegressor(mu1, mu_bound), ClippedRegressor(mu0, mu_bound)
    av = data_split.avg_indices
    Xav = ds.covariates[av]
    values = aipw_pseudo_outcome(ds.outcomes[av], ds.assignments[av],
                                 mu1.predict(Xav), mu0.predict(Xav), ds.treat_prob)
    return PseudoOutcomeVector(values=values, mu1_model=mu1, mu0_model=mu0, p=ds.treat_prob)
