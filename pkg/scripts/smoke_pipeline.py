#!/usr/bin/env python3
"""End-to-end smoke run of the CLI: simulate, fit, benchmark, report."""

import json
import sys
import tempfile
from pathlib import Path

from catestack.cli import main as cli

DGP = {"name": "easy_linear", "mu0_form": "linear", "tau_form": "linear_sparse",
       "noise_sigma": 0.5}
ROSTER = [
    {"framework": "constant_diff", "label": "constant"},
    {"framework": "t_learner", "label": "lasso_t", "base": {"kind": "lasso", "seed": 1}},
    {"framework": "s_learner", "label": "cart_s",
     "base": {"kind": "cart", "params": {"max_depth": 4}, "seed": 2}},
]


def run() -> int:
    root = Path(tempfile.mkdtemp(prefix="catestack_smoke_"))
    (root / "sim.json").write_text(json.dumps({"dgp": DGP, "n": 400, "p": 0.5, "seed": 9}))
    if cli(["simulate", "--config", str(root / "sim.json"), "--out", str(root / "data")]):
        return 1
    (root / "fit.json").write_text(json.dumps({
        "data": str(root / "data" / "dataset.csv"), "roster": ROSTER,
        "mu_base": {"kind": "lasso", "seed": 0}, "seed": 3,
    }))
    if cli(["fit", "--config", str(root / "fit.json"), "--out", str(root / "fit")]):
        return 1
    print((root / "fit" / "weights.json").read_text())
    (root / "bench.json").write_text(json.dumps({
        "dgps": [DGP], "p_values": [0.5], "n_pool": 300, "n_test": 200,
        "replications": 2, "roster": ROSTER,
        "strategies": ["causal_stack", "oracle_select"],
        "mu_base": {"kind": "lasso", "seed": 0}, "master_seed": 4,
    }))
    if cli(["benchmark", "--config", str(root / "bench.json"), "--out", str(root / "bench")]):
        return 1
    report = root / "bench" / "report_easy_linear_p0.5.json"
    if cli(["report", "--report", str(report), "--out", str(root / "tables")]):
        return 1
    print("smoke artifacts under", root)
    return 0


if __name__ == "__main__":
    sys.exit(run())
