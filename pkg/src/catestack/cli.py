"""Command-line entry point.

Subcommands: simulate (write a synthetic dataset), fit (run the stacking
pipeline on a CSV dataset), benchmark (replication suite), ablate (paired
comparison suite), report (re-render tables from an existing report JSON).
Configs are JSON or TOML files; a handful of flags override config fields.
Exit codes: 0 success, 1 internal/convergence failure, 2 user/config error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import benchmark as bm
from .dataset import Design, load_csv, save_csv, split
from .dgp import generate_dataset, resolve_dgp
from .ensemble import (StackedCateModel, WeightRegime, averaging_loss, build_plugin_problem,
                       build_r_stacking_problem, parse_regime, solve_stacking)
from .errors import ConvergenceError, FormatError, ParameterError
from .metalearners import default_roster, fit_candidate_library, roster_from_json
from .pseudo import MuFitMode, aipw_pseudo_outcome, build_pseudo_outcomes
from .regressors import RegressorSpec, fit_regressor
from .seeding import derive_seed

log = logging.getLogger("catestack")


@dataclass(frozen=True)
class CliInvocation:
    """Parsed command line: one subcommand plus its config and overrides."""

    command: str
    config: dict
    out_dir: Path
    jobs: int
    verbosity: int
    overrides: dict


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FormatError(f"config file not found: {p}")
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: not valid JSON ({exc})") from None


def _ensure_out_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FormatError(f"cannot create output directory {path}: {exc}") from None
    if not path.is_dir():
        raise FormatError(f"output path {path} is not a directory")
    probe = path / ".write_probe"
    try:
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise FormatError(f"output directory {path} is not writable: {exc}") from None
    return path


def _resolve_roster(config: dict, seed: int):
    roster = config.get("roster", "default")
    if roster == "default":
        return default_roster(seed)
    return roster_from_json(roster)


def _resolve_mu_base(config: dict, seed: int) -> RegressorSpec:
    mu = config.get("mu_base", "default")
    if mu == "default":
        return bm.default_mu_base(seed)
    return RegressorSpec.from_json(mu)


def _write_json(path: Path, obj) -> None:
    path.write_text(bm.canonical_json(obj), encoding="utf-8")


def cmd_simulate(inv: CliInvocation) -> None:
    cfg = inv.config
    dgp = resolve_dgp(cfg.get("dgp", "linear_sparse"))
    n = int(cfg.get("n", 1000))
    p = float(inv.overrides.get("p", cfg.get("p", 0.5)))
    design = Design(cfg.get("design", "bernoulli"))
    seed = int(inv.overrides.get("seed", cfg.get("seed", 0)))
    ds, truth = generate_dataset(dgp, n, p, design, seed)
    out = _ensure_out_dir(inv.out_dir)
    save_csv(ds, out / "dataset.csv")
    with open(out / "truth.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y1", "y0", "tau"])
        for a, b, c in zip(truth.y1, truth.y0, truth.tau):
            writer.writerow([repr(float(a)), repr(float(b)), repr(float(c))])
    log.info("wrote %s and %s", out / "dataset.csv", out / "truth.csv")


def cmd_fit(inv: CliInvocation) -> None:
    cfg = inv.config
    if "data" not in cfg:
        raise FormatError("fit config must name a 'data' CSV path")
    ds = load_csv(cfg["data"], sidecar=cfg.get("sidecar"), infer_p=bool(cfg.get("infer_p", False)))
    if "p" in inv.overrides:
        ds = replace(ds, treat_prob=float(inv.overrides["p"]))
    alpha = float(cfg.get("alpha", 1.0 / 3.0))
    seed = int(inv.overrides.get("seed", cfg.get("seed", 0)))
    regime_name = str(inv.overrides.get("regime", cfg.get("regime", "simplex")))
    refit_full = bool(inv.overrides.get("refit_full", cfg.get("refit_full", False)))
    mu_fit_mode = MuFitMode(cfg.get("mu_fit_mode", "per_arm"))
    roster = [s.reseed(derive_seed(seed, "lib", i)) for i, s in enumerate(_resolve_roster(cfg, seed))]
    mu_base = _resolve_mu_base(cfg, seed)

    ds_split = split(ds, alpha, derive_seed(seed, "split"))
    tr, av = ds_split.train_indices, ds_split.avg_indices
    Xtr, ytr, ztr = ds.covariates[tr], ds.outcomes[tr], ds.assignments[tr]
    Xav, yav, zav = ds.covariates[av], ds.outcomes[av], ds.assignments[av]
    candidates = fit_candidate_library(Xtr, ytr, ztr, roster, ds.treat_prob)

    if regime_name.replace("-", "_") == "r_stack":
        mu = fit_regressor(mu_base.reseed(derive_seed(seed, "rmu")), Xtr, ytr)
        problem = build_r_stacking_problem(Xav, yav, zav, candidates, mu, ds.treat_prob)
        weights = solve_stacking(problem, WeightRegime.NONNEGATIVE)
        if ds.treat_prob == 0.5:
            # diagnostic: with a shared outcome model the two losses have the
            # same minimizers over a common feasible set at p = 1/2
            shared = aipw_pseudo_outcome(yav, zav, mu.predict(Xav), mu.predict(Xav), 0.5)
            w_plugin = solve_stacking(build_plugin_problem(candidates, shared, Xav), WeightRegime.SIMPLEX)
            w_rsimplex = solve_stacking(problem, WeightRegime.SIMPLEX)
            gap = float(np.max(np.abs(w_plugin.weights - w_rsimplex.weights)))
            log.info("r-stack equivalence check at p=0.5: max weight gap %.3e", gap)
    else:
        pseudo = build_pseudo_outcomes(ds, ds_split, mu_fit_mode,
                                       mu_base.reseed(derive_seed(seed, "mu")))
        problem = build_plugin_problem(candidates, pseudo, Xav)
        weights = solve_stacking(problem, parse_regime(regime_name))

    deployed = candidates
    if refit_full:
        # weights come from the split fit; predictions from a full-data refit
        refit_specs = [s.reseed(derive_seed(seed, "refit", i)) for i, s in enumerate(_resolve_roster(cfg, seed))]
        deployed = fit_candidate_library(ds.covariates, ds.outcomes, ds.assignments,
                                         refit_specs, ds.treat_prob)
    stacked = StackedCateModel(weights, deployed)

    out = _ensure_out_dir(inv.out_dir)
    K = len(candidates)
    result = weights.to_json()
    result["labels"] = [m.label for m in candidates]
    result["per_candidate_plugin_loss"] = [averaging_loss(problem, np.eye(K)[k]) for k in range(K)]
    result["refit_full"] = refit_full
    result["regime_requested"] = regime_name
    _write_json(out / "weights.json", result)
    predictions = stacked.predict(ds.covariates)
    with open(out / "tau_predictions.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "tau_hat"])
        for i, v in enumerate(predictions):
            writer.writerow([i, repr(float(v))])
    log.info("wrote %s", out / "weights.json")


def _experiment_config(cfg: dict, inv: CliInvocation, dgp, p: float) -> bm.ExperimentConfig:
    seed = int(inv.overrides.get("seed", cfg.get("master_seed", 0)))
    reps = int(inv.overrides.get("reps", cfg.get("replications", 50)))
    strategies = tuple(bm.Strategy(s) for s in cfg.get(
        "strategies", ["causal_stack", "oracle_select"]))
    return bm.ExperimentConfig(
        dgp=resolve_dgp(dgp),
        n_pool=int(cfg.get("n_pool", 3000)),
        alpha=float(cfg.get("alpha", 1.0 / 3.0)),
        n_test=int(cfg.get("n_test", 1802)),
        p=p,
        design=Design(cfg.get("design", "bernoulli")),
        replications=reps,
        roster=tuple(_resolve_roster(cfg, seed)),
        strategies=strategies,
        mu_base=_resolve_mu_base(cfg, seed),
        mu_fit_mode=MuFitMode(cfg.get("mu_fit_mode", "per_arm")),
        master_seed=seed,
    )


def _suite_p_values(cfg: dict, inv: CliInvocation) -> list[float]:
    if "p" in inv.overrides:
        return [float(inv.overrides["p"])]
    return [float(v) for v in cfg.get("p_values", [0.1, 0.3, 0.5])]


def cmd_benchmark(inv: CliInvocation) -> None:
    cfg = inv.config
    dgps = cfg.get("dgps", ["step"])
    if not dgps:
        raise FormatError("benchmark config needs a nonempty 'dgps' list")
    p_values = _suite_p_values(cfg, inv)
    base = _experiment_config(cfg, inv, dgps[0], p_values[0])
    suite = bm.run_suite(base, dgps, p_values, jobs=inv.jobs)
    out = _ensure_out_dir(inv.out_dir)
    for name, p, report in suite.cells:
        bm.write_report_json(report, out / f"report_{name}_p{p}.json")
    for a, b in itertools.combinations(base.strategies, 2):
        rows = suite.win_share_table(a, b)
        bm.write_win_share_csv(rows, a, b, out / f"table_{a.value}_vs_{b.value}.csv")
    summary = {
        "cells": [
            {"dgp": name, "p": p, "config_digest": report.config.digest(),
             "mean_mse": report.mean_mse()}
            for name, p, report in suite.cells
        ]
    }
    _write_json(out / "suite_summary.json", summary)
    log.info("benchmark suite complete: %d cells", len(suite.cells))


def _cross_report_rows(cells_a, cells_b, label_a: str, label_b: str) -> list[dict]:
    """Win shares between two paired runs, compared on causal_stack mean MSE."""
    p_values = sorted({p for _, p, _ in cells_a})
    rows = []
    for p in p_values:
        wins_a = wins_b = tie = 0
        reports_a = {name: r for name, cp, r in cells_a if cp == p}
        reports_b = {name: r for name, cp, r in cells_b if cp == p}
        for name in sorted(reports_a):
            mse_a = reports_a[name].mean_mse()[bm.Strategy.CAUSAL_STACK.value]
            mse_b = reports_b[name].mean_mse()[bm.Strategy.CAUSAL_STACK.value]
            if mse_a == mse_b:
                tie += 1
            elif mse_a < mse_b:
                wins_a += 1
            else:
                wins_b += 1
        total = max(len(reports_a), 1)
        rows.append({"p": p, label_a: wins_a / total, label_b: wins_b / total, "tie": tie / total})
    return rows


def _write_rows_csv(rows: list[dict], keys: list[str], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for row in rows:
            writer.writerow([repr(row[k]) for k in keys])


def cmd_ablate(inv: CliInvocation) -> None:
    cfg = inv.config
    dgps = cfg.get("dgps", ["step"])
    if not dgps:
        raise FormatError("ablate config needs a nonempty 'dgps' list")
    p_values = _suite_p_values(cfg, inv)
    out = _ensure_out_dir(inv.out_dir)
    arms: dict[str, list] = {}
    for dgp_like in dgps:
        dgp = resolve_dgp(dgp_like)
        for p in p_values:
            config = _experiment_config(cfg, inv, dgp, p)
            config = replace(config, master_seed=derive_seed(config.master_seed, dgp.name, repr(p)))
            suite = bm.ablation_suite(config, jobs=inv.jobs)
            for arm, report in suite.items():
                arms.setdefault(arm, []).append((dgp.name, p, report))
                bm.write_report_json(report, out / f"ablation_{arm}_{dgp.name}_p{p}.json")
    constraint_cells = bm.SuiteResult(cells=tuple(arms["constraints"]))
    pairs = [
        (bm.Strategy.CAUSAL_STACK, bm.Strategy.CAUSAL_STACK_NO_L1),
        (bm.Strategy.CAUSAL_STACK_NO_L1, bm.Strategy.R_STACK),
        (bm.Strategy.CAUSAL_STACK, bm.Strategy.R_STACK),
        (bm.Strategy.CAUSAL_STACK, bm.Strategy.CAUSAL_STACK_UNCONSTRAINED),
    ]
    for a, b in pairs:
        rows = constraint_cells.win_share_table(a, b)
        bm.write_win_share_csv(rows, a, b, out / f"table_{a.value}_vs_{b.value}.csv")
    roster_rows = _cross_report_rows(arms["roster_full"], arms["roster_reduced"],
                                     "full_roster", "reduced_roster")
    _write_rows_csv(roster_rows, ["p", "full_roster", "reduced_roster", "tie"],
                    out / "table_full_vs_reduced_roster.csv")
    mu_rows = _cross_report_rows(arms["mu_strong"], arms["mu_weak"], "strong_mu", "weak_mu")
    _write_rows_csv(mu_rows, ["p", "strong_mu", "weak_mu", "tie"],
                    out / "table_strong_vs_weak_mu.csv")
    log.info("ablation suite complete")


def cmd_report(inv: CliInvocation) -> None:
    cfg = inv.config
    report_path = cfg.get("report") or inv.overrides.get("report")
    if not report_path:
        raise FormatError("report command needs a 'report' path (JSON produced by benchmark)")
    path = Path(report_path)
    if not path.exists():
        raise FormatError(f"report file not found: {path}")
    report_json = json.loads(path.read_text(encoding="utf-8"))
    written = bm.render_report_tables(report_json, _ensure_out_dir(inv.out_dir))
    log.info("rendered %d tables", len(written))


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "benchmark": cmd_benchmark,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catestack",
                                     description="Effect-model stacking toolkit")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="JSON or TOML config file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker processes (falls back to CATE_STACK_JOBS)")
    parser.add_argument("--regime", help="fit: simplex | nonneg | unconstrained | r-stack")
    parser.add_argument("--refit-full", action="store_true",
                        help="fit: refit candidates on all rows for deployment")
    parser.add_argument("--p", type=float, help="override assignment probability")
    parser.add_argument("--reps", type=int, help="override replication count")
    parser.add_argument("--report", help="report: path to an existing report JSON")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _invocation(args) -> CliInvocation:
    overrides = {}
    for key in ("seed", "regime", "p", "reps", "report"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.refit_full:
        overrides["refit_full"] = True
    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("CATE_STACK_JOBS", "1"))
    if jobs < 1:
        raise ParameterError("--jobs must be at least 1")
    return CliInvocation(command=args.command, config=_load_config(args.config),
                         out_dir=Path(args.out), jobs=jobs, verbosity=args.verbose,
                         overrides=overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        inv = _invocation(args)
        _COMMANDS[inv.command](inv)
    except (FormatError, KeyError, ValueError) as exc:
        # ParameterError subclasses ValueError; enum/number conversion
        # failures in configs land here as user errors too
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
