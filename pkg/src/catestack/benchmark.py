"""Replication harness, aggregation and report rendering.

One replication regenerates the experiment, splits it design-aware, fits
the candidate library and outcome models on the training rows, builds
pseudo-outcomes on the averaging rows, solves every configured strategy,
and scores each strategy's final model on a fresh test sample against the
true effect function. Everything is deterministic given the master seed,
including under worker parallelism.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import Design, split
from .dgp import DgpSpec, generate_dataset, resolve_dgp, true_tau
from .ensemble import (WeightRegime, build_plugin_problem, build_r_stacking_problem,
                       candidate_matrix, solve_stacking)
from .errors import ParameterError, StageError
from .metalearners import (CateAlgorithmSpec, default_roster, fit_candidate_library)
from .pseudo import MuFitMode, build_pseudo_outcomes
from .regressors import RegressorKind, RegressorSpec, fit_regressor
from .seeding import derive_seed
from .selection_eval import evaluation_sample


class Strategy(str, Enum):
    CAUSAL_STACK = "causal_stack"
    CAUSAL_STACK_NO_L1 = "causal_stack_no_l1"
    CAUSAL_STACK_UNCONSTRAINED = "causal_stack_unconstrained"
    R_STACK = "r_stack"
    ORACLE_SELECT = "oracle_select"
    PLUGIN_SELECT = "plugin_select"


_STACKING_REGIMES = {
    Strategy.CAUSAL_STACK: WeightRegime.SIMPLEX,
    Strategy.CAUSAL_STACK_NO_L1: WeightRegime.NONNEGATIVE,
    Strategy.CAUSAL_STACK_UNCONSTRAINED: WeightRegime.UNCONSTRAINED,
}


def default_mu_base(seed: int = 0) -> RegressorSpec:
    return RegressorSpec(kind=RegressorKind.GRADIENT_BOOSTING, seed=derive_seed(seed, "mu_base"))


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one benchmark run on one process."""

    dgp: DgpSpec
    n_pool: int = 3000
    alpha: float = 1.0 / 3.0
    n_test: int = 1802
    p: float = 0.5
    design: Design = Design.BERNOULLI
    replications: int = 50
    roster: tuple = ()
    strategies: tuple = (Strategy.CAUSAL_STACK, Strategy.ORACLE_SELECT)
    mu_base: RegressorSpec = field(default_factory=default_mu_base)
    mu_fit_mode: MuFitMode = MuFitMode.PER_ARM
    master_seed: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise ParameterError("need at least one replication")
        if not self.strategies:
            raise ParameterError("need at least one strategy")
        roster = tuple(self.roster) if self.roster else tuple(default_roster(self.master_seed))
        object.__setattr__(self, "roster", roster)
        object.__setattr__(self, "strategies", tuple(Strategy(s) for s in self.strategies))
        object.__setattr__(self, "design", Design(self.design))
        object.__setattr__(self, "mu_fit_mode", MuFitMode(self.mu_fit_mode))

    def candidate_labels(self) -> list[str]:
        return [s.label if isinstance(s, CateAlgorithmSpec) else getattr(s, "label", f"candidate_{i}")
                for i, s in enumerate(self.roster)]

    def to_json(self) -> dict:
        def roster_entry(s, i):
            if isinstance(s, CateAlgorithmSpec):
                return s.to_json()
            return {"label": getattr(s, "label", f"candidate_{i}"), "injected": True}

        return {
            "dgp": self.dgp.to_json(),
            "n_pool": self.n_pool,
            "alpha": self.alpha,
            "n_test": self.n_test,
            "p": self.p,
            "design": self.design.value,
            "replications": self.replications,
            "roster": [roster_entry(s, i) for i, s in enumerate(self.roster)],
            "strategies": [s.value for s in self.strategies],
            "mu_base": self.mu_base.to_json(),
            "mu_fit_mode": self.mu_fit_mode.value,
            "master_seed": self.master_seed,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ReplicationRecord:
    rep_index: int
    mse: dict
    weights: dict
    selected: dict
    timing_seconds: float

    def to_json(self) -> dict:
        # timing intentionally excluded: report bytes must not depend on wall clock
        return {
            "rep": self.rep_index,
            "mse": {k: self.mse[k] for k in sorted(self.mse)},
            "weights": {k: self.weights[k] for k in sorted(self.weights)},
            "selected": {k: self.selected[k] for k in sorted(self.selected)},
        }


@dataclass(frozen=True)
class ReplicationFailure:
    rep_index: int
    stage: str
    message: str

    def to_json(self) -> dict:
        return {"rep": self.rep_index, "stage": self.stage, "message": self.message}


def run_replication(config: ExperimentConfig, rep_index: int) -> ReplicationRecord:
    """Execute one replication; stage failures carry a stage tag."""
    started = time.perf_counter()
    seed = config.master_seed
    dgp = config.dgp

    def stage(name, fn):
        try:
            return fn()
        except Exception as exc:
            raise StageError(name, str(exc)) from exc

    ds, _ = stage("generate", lambda: generate_dataset(
        dgp, config.n_pool, config.p, config.design, derive_seed(seed, "data", rep_index)))
    ds_split = stage("split", lambda: split(ds, config.alpha, derive_seed(seed, "split", rep_index)))
    tr, av = ds_split.train_indices, ds_split.avg_indices
    Xtr, ytr, ztr = ds.covariates[tr], ds.outcomes[tr], ds.assignments[tr]
    Xav, yav, zav = ds.covariates[av], ds.outcomes[av], ds.assignments[av]

    roster = [
        s.reseed(derive_seed(seed, "lib", rep_index, i)) if isinstance(s, CateAlgorithmSpec) else s
        for i, s in enumerate(config.roster)
    ]
    candidates = stage("candidates", lambda: fit_candidate_library(Xtr, ytr, ztr, roster, config.p))
    pseudo = stage("pseudo", lambda: build_pseudo_outcomes(
        ds, ds_split, config.mu_fit_mode, config.mu_base.reseed(derive_seed(seed, "mu", rep_index))))
    test = stage("test_sample", lambda: evaluation_sample(
        dgp, config.n_test, derive_seed(seed, "test", rep_index)))

    plugin_problem = stage("plugin_problem", lambda: build_plugin_problem(candidates, pseudo, Xav))
    # candidates predict once per covariate matrix; every strategy reuses the columns
    T_test = stage("test_predictions", lambda: candidate_matrix(candidates, test.covariates))
    T_avg = plugin_problem.candidate_matrix

    def score_weights(w):
        return float(np.mean((T_test @ w - test.true_tau) ** 2))

    def score_candidate(idx):
        return float(np.mean((T_test[:, idx] - test.true_tau) ** 2))

    mse, weights, selected = {}, {}, {}
    for strategy in config.strategies:
        if strategy in _STACKING_REGIMES:
            wv = stage(strategy.value, lambda s=strategy: solve_stacking(
                plugin_problem, _STACKING_REGIMES[s]))
            weights[strategy.value] = [float(v) for v in wv.weights]
            mse[strategy.value] = stage("score", lambda v=wv: score_weights(v.weights))
        elif strategy == Strategy.R_STACK:
            def fit_r_stack():
                mu = fit_regressor(config.mu_base.reseed(derive_seed(seed, "rmu", rep_index)), Xtr, ytr)
                problem = build_r_stacking_problem(Xav, yav, zav, candidates, mu, config.p)
                return solve_stacking(problem, WeightRegime.NONNEGATIVE)
            wv = stage(strategy.value, fit_r_stack)
            weights[strategy.value] = [float(v) for v in wv.weights]
            mse[strategy.value] = stage("score", lambda v=wv: score_weights(v.weights))
        elif strategy == Strategy.ORACLE_SELECT:
            tau_av = true_tau(dgp, Xav)
            idx = stage(strategy.value, lambda: int(np.argmin(
                [float(np.mean((col - tau_av) ** 2)) for col in T_avg.T])))
            selected[strategy.value] = idx
            mse[strategy.value] = stage("score", lambda i=idx: score_candidate(i))
        else:
            idx = stage(strategy.value, lambda: int(np.argmin(
                [float(np.mean((pseudo.values - col) ** 2)) for col in T_avg.T])))
            selected[strategy.value] = idx
            mse[strategy.value] = stage("score", lambda i=idx: score_candidate(i))

    return ReplicationRecord(rep_index=rep_index, mse=mse, weights=weights, selected=selected,
                             timing_seconds=time.perf_counter() - started)


@dataclass(frozen=True)
class ReplicationReport:
    """All replication records plus deterministic aggregates."""

    config: ExperimentConfig
    records: tuple
    failures: tuple

    def successful(self) -> list[ReplicationRecord]:
        return list(self.records)

    def mean_mse(self) -> dict:
        out = {}
        for s in self.config.strategies:
            vals = [r.mse[s.value] for r in self.records]
            out[s.value] = float(np.mean(vals)) if vals else float("nan")
        return out

    def win_rates(self) -> tuple[dict, dict]:
        """Pairwise wins and ties from mean test MSE; win+loss+tie = 1."""
        mean = self.mean_mse()
        wins, ties = {}, {}
        names = [s.value for s in self.config.strategies]
        for a in names:
            wins[a], ties[a] = {}, {}
            for b in names:
                if a == b:
                    continue
                wins[a][b] = 1.0 if mean[a] < mean[b] else 0.0
                ties[a][b] = 1.0 if mean[a] == mean[b] else 0.0
        return wins, ties

    def mean_weights(self) -> dict:
        out = {}
        for s in self.config.strategies:
            rows = [r.weights[s.value] for r in self.records if s.value in r.weights]
            if rows:
                out[s.value] = [float(v) for v in np.mean(np.array(rows), axis=0)]
        return out

    def to_json(self) -> dict:
        wins, ties = self.win_rates()
        return {
            "config_digest": self.config.digest(),
            "config": self.config.to_json(),
            "candidate_labels": self.config.candidate_labels(),
            "per_replication": [r.to_json() for r in sorted(self.records, key=lambda r: r.rep_index)],
            "failures": [f.to_json() for f in sorted(self.failures, key=lambda f: f.rep_index)],
            "aggregates": {
                "mean_mse": self.mean_mse(),
                "win_rates": wins,
                "tie_rates": ties,
                "mean_weights": self.mean_weights(),
                "n_failures": len(self.failures),
            },
        }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _replication_worker(args):
    config, rep = args
    try:
        return run_replication(config, rep)
    except StageError as exc:
        return ReplicationFailure(rep_index=rep, stage=exc.stage, message=str(exc))


def run_benchmark(config: ExperimentConfig, jobs: int = 1) -> ReplicationReport:
    """Run all replications (optionally in worker processes) and aggregate.

    Aborts if more than 20% of replications fail.
    """
    args = [(config, rep) for rep in range(config.replications)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replication_worker, args, chunksize=1))
    else:
        results = [_replication_worker(a) for a in args]
    records = tuple(sorted((r for r in results if isinstance(r, ReplicationRecord)),
                           key=lambda r: r.rep_index))
    failures = tuple(sorted((r for r in results if isinstance(r, ReplicationFailure)),
                            key=lambda r: r.rep_index))
    if len(failures) > 0.2 * config.replications:
        summary = "; ".join(f"rep {f.rep_index} [{f.stage}]: {f.message}" for f in failures[:5])
        raise RuntimeError(f"{len(failures)}/{config.replications} replications failed: {summary}")
    return ReplicationReport(config=config, records=records, failures=failures)


def reduced_roster(roster) -> tuple:
    """Candidates 2-4 of the library (the historically dominant trio)."""
    if len(roster) < 4:
        return tuple(roster)
    return tuple(roster[1:4])


def ablation_suite(config: ExperimentConfig, jobs: int = 1) -> dict[str, ReplicationReport]:
    """The paired comparisons: constraint variants, reduced roster, weak outcome model.

    All arms share the master seed, so datasets, splits and (where the
    roster agrees) candidate libraries are identical across arms.
    """
    constraint_strategies = (Strategy.CAUSAL_STACK, Strategy.CAUSAL_STACK_NO_L1,
                             Strategy.CAUSAL_STACK_UNCONSTRAINED, Strategy.R_STACK)
    stack_only = (Strategy.CAUSAL_STACK,)
    weak_mu = RegressorSpec(kind=RegressorKind.RIDGE, params={"penalty": 1e-8},
                            seed=derive_seed(config.master_seed, "weak_mu"))
    runs = {
        "constraints": replace(config, strategies=constraint_strategies),
        "roster_full": replace(config, strategies=stack_only),
        "roster_reduced": replace(config, strategies=stack_only, roster=reduced_roster(config.roster)),
        "mu_strong": replace(config, strategies=stack_only,
                             mu_base=default_mu_base(config.master_seed)),
        "mu_weak": replace(config, strategies=stack_only, mu_base=weak_mu),
    }
    return {name: run_benchmark(cfg, jobs=jobs) for name, cfg in runs.items()}


def write_report_json(report: ReplicationReport, path) -> None:
    Path(path).write_text(canonical_json(report.to_json()), encoding="utf-8")


def render_report_tables(report_json: dict, out_dir) -> list[Path]:
    """Render CSV/TSV tables from a report JSON dict; pure and reproducible."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    mse_path = out_dir / "mean_mse.csv"
    with open(mse_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "mean_test_mse"])
        for name in sorted(report_json["aggregates"]["mean_mse"]):
            writer.writerow([name, repr(report_json["aggregates"]["mean_mse"][name])])
    written.append(mse_path)

    win_path = out_dir / "win_rates.csv"
    wins = report_json["aggregates"]["win_rates"]
    ties = report_json["aggregates"]["tie_rates"]
    with open(win_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy_a", "strategy_b", "a_wins", "b_wins", "tie"])
        for a in sorted(wins):
            for b in sorted(wins[a]):
                writer.writerow([a, b, repr(wins[a][b]), repr(wins[b][a]), repr(ties[a][b])])
    written.append(win_path)

    for name in sorted(report_json["aggregates"]["mean_weights"]):
        weights = report_json["aggregates"]["mean_weights"][name]
        tsv = out_dir / f"weights_{name}.tsv"
        with open(tsv, "w", encoding="utf-8", newline="") as fh:
            fh.write("candidate\tmean_weight\n")
            for label, value in zip(report_json["candidate_labels"], weights):
                fh.write(f"{label}\t{value!r}\n")
        written.append(tsv)
    return written


@dataclass(frozen=True)
class SuiteResult:
    """Reports for a grid of (process, assignment probability) cells."""

    cells: tuple  # of (dgp_name, p, ReplicationReport)

    def win_share_table(self, a: Strategy, b: Strategy) -> list[dict]:
        """Share of processes won per p value; ties reported separately."""
        a, b = Strategy(a).value, Strategy(b).value
        p_values = sorted({p for _, p, _ in self.cells})
        rows = []
        for p in p_values:
            reports = [r for _, cp, r in self.cells if cp == p]
            wins_a = wins_b = tie = 0
            for r in reports:
                wins, ties = r.win_rates()
                if ties[a][b] == 1.0:
                    tie += 1
                elif wins[a][b] == 1.0:
                    wins_a += 1
                else:
                    wins_b += 1
            total = max(len(reports), 1)
            rows.append({"p": p, a: wins_a / total, b: wins_b / total, "tie": tie / total})
        return rows


def run_suite(base_config: ExperimentConfig, dgps: list, p_values: list[float],
              jobs: int = 1) -> SuiteResult:
    """Run the benchmark over every (process, p) cell.

    Each cell derives its own master seed from the base seed so that cells
    are independent but the whole suite is reproducible.
    """
    cells = []
    for dgp_like in dgps:
        dgp = resolve_dgp(dgp_like)
        for p in p_values:
            cfg = replace(base_config, dgp=dgp, p=p,
                          master_seed=derive_seed(base_config.master_seed, dgp.name, repr(p)))
            cells.append((dgp.name, p, run_benchmark(cfg, jobs=jobs)))
    return SuiteResult(cells=tuple(cells))


def write_win_share_csv(rows: list[dict], a: Strategy, b: Strategy, path) -> None:
    """Table rows: one line per p with win shares for each side and ties."""
    a, b = Strategy(a).value, Strategy(b).value
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", f"{a}_share", f"{b}_share", "tie_share"])
        for row in rows:
            writer.writerow([repr(row["p"]), repr(row[a]), repr(row[b]), repr(row["tie"])])
