"""Experimental data model: assignment designs, splitting, CSV ingestion.

Datasets and splits are immutable after construction and safe to share
across concurrent replications.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .seeding import rng_from


class Design(str, Enum):
    BERNOULLI = "bernoulli"
    COMPLETELY_RANDOMIZED = "completely_randomized"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def treated_count(n: int, p: float) -> int:
    """Number of treated units in a completely randomized design.

    round(p*n) to nearest, ties to even; the design is usually stated for
    integral p*n, so the rounding rule only matters at the margin.
    """
    return int(round(p * n))


@dataclass(frozen=True)
class ExperimentDataset:
    """Covariates, observed outcomes and binary assignments from one experiment."""

    covariates: np.ndarray
    outcomes: np.ndarray
    assignments: np.ndarray
    treat_prob: float
    design: Design

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        y = np.asarray(self.outcomes, dtype=float)
        z = np.asarray(self.assignments)
        if X.ndim != 2:
            raise ParameterError("covariates must be a 2-D matrix")
        n = X.shape[0]
        if n < 2:
            raise ParameterError(f"need at least 2 rows, got {n}")
        if y.shape != (n,) or z.shape != (n,):
            raise ParameterError("covariates, outcomes and assignments must share row count")
        if not np.isin(z, (0, 1)).all():
            raise ParameterError("assignments must be 0 or 1")
        if not (0.0 < self.treat_prob < 1.0):
            raise ParameterError(f"treat_prob must lie strictly inside (0, 1), got {self.treat_prob}")
        z = z.astype(np.int64)
        if self.design == Design.COMPLETELY_RANDOMIZED:
            want = treated_count(n, self.treat_prob)
            if int(z.sum()) != want:
                raise ParameterError(
                    f"completely randomized design requires exactly {want} treated units, got {int(z.sum())}"
                )
        object.__setattr__(self, "covariates", _frozen(X))
        object.__setattr__(self, "outcomes", _frozen(y))
        object.__setattr__(self, "assignments", _frozen(z))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def dim(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class DataSplit:
    """Disjoint training / averaging index sets covering all rows."""

    train_indices: np.ndarray
    avg_indices: np.ndarray
    alpha: float

    def __post_init__(self):
        tr = np.asarray(self.train_indices, dtype=np.int64)
        av = np.asarray(self.avg_indices, dtype=np.int64)
        if np.intersect1d(tr, av).size > 0:
            raise ParameterError("train and averaging index sets must be disjoint")
        n = tr.size + av.size
        union = np.union1d(tr, av)
        if union.size != n or union[0] != 0 or union[-1] != n - 1:
            raise ParameterError("train and averaging sets must partition the row range")
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        object.__setattr__(self, "train_indices", _frozen(np.sort(tr)))
        object.__setattr__(self, "avg_indices", _frozen(np.sort(av)))


@dataclass(frozen=True)
class PotentialOutcomeTable:
    """Synthetic-only ground truth: both potential outcomes and their difference."""

    y1: np.ndarray
    y0: np.ndarray
    tau: np.ndarray = field(default=None)

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float)
        y0 = np.asarray(self.y0, dtype=float)
        tau = y1 - y0 if self.tau is None else np.asarray(self.tau, dtype=float)
        if not np.array_equal(tau, y1 - y0):
            raise ParameterError("tau must equal y1 - y0 exactly")
        object.__setattr__(self, "y1", _frozen(y1))
        object.__setattr__(self, "y0", _frozen(y0))
        object.__setattr__(self, "tau", _frozen(tau))


def assign_treatments(n: int, p: float, design: Design, seed: int) -> np.ndarray:
    """Draw a binary assignment vector under the given design.

    Bernoulli: i.i.d. Bernoulli(p). Completely randomized: uniform over
    binary vectors with exactly ``treated_count(n, p)`` ones.
    """
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    if not (0.0 < p < 1.0):
        raise ParameterError(f"p must lie strictly inside (0, 1), got {p}")
    rng = rng_from(seed, "assign")
    design = Design(design)
    if design == Design.BERNOULLI:
        return (rng.random(n) < p).astype(np.int64)
    m = treated_count(n, p)
    z = np.zeros(n, dtype=np.int64)
    z[rng.permutation(n)[:m]] = 1
    return z


def split(ds: ExperimentDataset, alpha: float, seed: int) -> DataSplit:
    """Partition rows into training and averaging sets.

    |S_avg| = round(alpha * n). Under a completely randomized design the
    split is stratified by arm so the treated fraction of the averaging set
    matches the design probability up to rounding.
    """
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    n = ds.n
    m_avg = int(round(alpha * n))
    if m_avg == 0 or m_avg == n:
        raise ParameterError(f"alpha={alpha} yields an empty train or averaging set for n={n}")
    rng = rng_from(seed, "split")
    if ds.design == Design.BERNOULLI:
        avg = rng.permutation(n)[:m_avg]
    else:
        treated = np.flatnonzero(ds.assignments == 1)
        control = np.flatnonzero(ds.assignments == 0)
        t_avg = int(round(ds.treat_prob * m_avg))
        t_avg = min(max(t_avg, m_avg - control.size), treated.size)
        c_avg = m_avg - t_avg
        if c_avg < 0 or c_avg > control.size:
            raise ParameterError("cannot stratify: arm sizes incompatible with alpha")
        avg = np.concatenate([
            treated[rng.permutation(treated.size)[:t_avg]],
            control[rng.permutation(control.size)[:c_avg]],
        ])
    avg_sorted = np.sort(avg)
    train = np.setdiff1d(np.arange(n), avg_sorted, assume_unique=True)
    return DataSplit(train_indices=train, avg_indices=avg_sorted, alpha=alpha)


def _parse_sidecar(path: Path) -> tuple[float, Design]:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if "p" not in cfg or "design" not in cfg:
        raise FormatError(f"sidecar {path} must contain keys 'p' and 'design'")
    try:
        design = Design(cfg["design"])
    except ValueError:
        raise FormatError(f"sidecar {path}: unknown design '{cfg['design']}'") from None
    return float(cfg["p"]), design


def load_csv(path, sidecar=None, infer_p: bool = False) -> ExperimentDataset:
    """Load a dataset from CSV with columns ``y``, ``z`` and numeric covariates.

    Column order is free; names are fixed. The assignment probability and
    design come from a JSON sidecar (``<path stem>.json`` by default); with
    ``infer_p=True`` and no sidecar, p is the realized treated fraction and
    the design is taken to be Bernoulli.
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for required in ("y", "z"):
            if required not in header:
                raise FormatError(f"{path}: missing required column '{required}'")
        y_col = header.index("y")
        z_col = header.index("z")
        cov_cols = [i for i in range(len(header)) if i not in (y_col, z_col)]
        rows_x, rows_y, rows_z = [], [], []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}")
            def cell(i):
                try:
                    return float(row[i])
                except ValueError:
                    raise FormatError(
                        f"{path}: non-numeric cell in column '{header[i]}', row {rownum}: {row[i]!r}"
                    ) from None
            zv = cell(z_col)
            if zv not in (0.0, 1.0):
                raise FormatError(f"{path}: non-binary z entry {row[z_col]!r} in row {rownum}")
            rows_y.append(cell(y_col))
            rows_z.append(int(zv))
            rows_x.append([cell(i) for i in cov_cols])
    if not rows_y:
        raise FormatError(f"{path}: no data rows")
    X = np.array(rows_x, dtype=float)
    y = np.array(rows_y, dtype=float)
    z = np.array(rows_z, dtype=np.int64)
    sidecar = Path(sidecar) if sidecar is not None else path.with_suffix(".json")
    if sidecar.exists():
        p, design = _parse_sidecar(sidecar)
    elif infer_p:
        p, design = float(z.mean()), Design.BERNOULLI
        if not (0.0 < p < 1.0):
            raise FormatError(f"{path}: cannot infer p, all assignments identical")
    else:
        raise FormatError(f"{path}: no sidecar config at {sidecar} and infer_p is off")
    return ExperimentDataset(covariates=X, outcomes=y, assignments=z, treat_prob=p, design=design)


def save_csv(ds: ExperimentDataset, path, write_sidecar: bool = True) -> None:
    """Write a dataset (and sidecar config) in the format accepted by load_csv.

    Floats are written with round-trip repr so a write/load cycle is
    bit-exact.
    """
    path = Path(path)
    names = [f"x{j + 1}" for j in range(ds.dim)] + ["y", "z"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(ds.n):
            writer.writerow(
                [repr(float(v)) for v in ds.covariates[i]]
                + [repr(float(ds.outcomes[i])), str(int(ds.assignments[i]))]
            )
    if write_sidecar:
        with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
            json.dump({"p": ds.treat_prob, "design": ds.design.value}, fh, sort_keys=True)
            fh.write("\n")
