#!/usr/bin/env python3
"""Run the shipped benchmark suite and print a compact summary.

Example:
    python scripts/run_benchmark_suite.py --reps 50 --p 0.5 --jobs 2 --out out/suite
"""

import argparse
from pathlib import Path

from catestack.benchmark import (ExperimentConfig, Strategy, run_suite,
                                 write_report_json, write_win_share_csv)
from catestack.dgp import default_dgps


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=50)
    parser.add_argument("--p", type=float, nargs="+", default=[0.5])
    parser.add_argument("--n-pool", type=int, default=3000)
    parser.add_argument("--n-test", type=int, default=1802)
    parser.add_argument("--seed", type=int, default=61)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="out/suite")
    args = parser.parse_args()

    dgps = list(default_dgps().values())
    base = ExperimentConfig(
        dgp=dgps[0], n_pool=args.n_pool, alpha=1.0 / 3.0, n_test=args.n_test,
        p=args.p[0], replications=args.reps,
        strategies=(Strategy.CAUSAL_STACK, Strategy.R_STACK, Strategy.ORACLE_SELECT,
                    Strategy.PLUGIN_SELECT),
        master_seed=args.seed,
    )
    suite = run_suite(base, dgps, args.p, jobs=args.jobs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, p, report in suite.cells:
        write_report_json(report, out / f"report_{name}_p{p}.json")
        mm = report.mean_mse()
        print(f"{name:20s} p={p:.1f} " + "  ".join(f"{k}={v:.5f}" for k, v in sorted(mm.items())))
    for a, b in [(Strategy.CAUSAL_STACK, Strategy.ORACLE_SELECT),
                 (Strategy.CAUSAL_STACK, Strategy.R_STACK)]:
        rows = suite.win_share_table(a, b)
        write_win_share_csv(rows, a, b, out / f"table_{a.value}_vs_{b.value}.csv")
        for row in rows:
            print(f"p={row['p']}: {a.value} wins {row[a.value]:.0%}, "
                  f"{b.value} wins {row[b.value]:.0%}, ties {row['tie']:.0%}")


if __name__ == "__main__":
    main()
