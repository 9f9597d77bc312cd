import numpy as np
import pytest

from catestack.benchmark import (ExperimentConfig, Strategy, ablation_suite, canonical_json,
                                 reduced_roster, render_report_tables, run_benchmark,
                                 run_replication, run_suite, write_report_json)
from catestack.dataset import Design
from catestack.dgp import (BaselineForm, DgpSpec, EffectForm, clipped_normal_mean,
                           default_dgps, generate_dataset, resolve_dgp, true_tau)
from catestack.errors import ParameterError
from catestack.metalearners import CateAlgorithmSpec, CateModel, MetaFramework
from catestack.regressors import RegressorKind, RegressorSpec


def cheap_roster():
    return (
        CateAlgorithmSpec(MetaFramework.CONSTANT_DIFF, label="constant"),
        CateAlgorithmSpec(MetaFramework.T_LEARNER,
                          RegressorSpec(kind=RegressorKind.RIDGE, params={"penalty": 1e-6}),
                          label="ridge_t"),
        CateAlgorithmSpec(MetaFramework.S_LEARNER,
                          RegressorSpec(kind=RegressorKind.CART,
                                        params={"max_depth": 3, "min_leaf": 5}),
                          label="cart_s"),
        CateAlgorithmSpec(MetaFramework.T_LEARNER,
                          RegressorSpec(kind=RegressorKind.KNN, params={"k": 5}),
                          label="knn_t"),
    )


LINEAR_DGP = DgpSpec(name="easy_linear", mu0_form=BaselineForm.LINEAR,
                     tau_form=EffectForm.LINEAR_SPARSE, noise_sigma=0.5)


def tiny_config(**overrides):
    defaults = dict(
        dgp=LINEAR_DGP,
        n_pool=240, alpha=1.0 / 3.0, n_test=200, p=0.5,
        design=Design.BERNOULLI, replications=3,
        roster=cheap_roster(),
        strategies=(Strategy.CAUSAL_STACK, Strategy.ORACLE_SELECT),
        mu_base=RegressorSpec(kind=RegressorKind.RIDGE, params={"penalty": 1e-6}),
        master_seed=42,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestDgp:
    def test_zero_effect_statistics(self):
        dgp = DgpSpec(name="t", tau_form=EffectForm.ZERO, noise_sigma=0.5)
        _, truth = generate_dataset(dgp, 20000, 0.5, Design.BERNOULLI, seed=1)
        diffs = truth.y1 - truth.y0
        assert abs(diffs.mean()) < 0.02
        assert np.var(diffs) == pytest.approx(2 * 0.25, rel=0.05)

    def test_noiseless_constant_effect(self):
        # tau is the literal float difference y1 - y0, so the constant is
        # recovered to the last unit in the last place
        dgp = DgpSpec(name="t", tau_form=EffectForm.CONSTANT, noise_sigma=0.0)
        _, truth = generate_dataset(dgp, 100, 0.5, Design.BERNOULLI, seed=2)
        assert np.array_equal(truth.tau, truth.y1 - truth.y0)
        assert np.allclose(truth.tau, 1.0, rtol=0, atol=5e-16)

    def test_outcome_bound_clips_everything(self):
        dgp = default_dgps()["bounded_nonlinear"]
        for chunk_seed in range(10):
            _, truth = generate_dataset(dgp, 100000, 0.5, Design.BERNOULLI, seed=chunk_seed)
            assert np.max(np.abs(truth.y1)) <= 1.0
            assert np.max(np.abs(truth.y0)) <= 1.0

    def test_consistency_equation(self):
        dgp = default_dgps()["step"]
        ds, truth = generate_dataset(dgp, 500, 0.3, Design.COMPLETELY_RANDOMIZED, seed=3)
        expected = ds.assignments * truth.y1 + (1 - ds.assignments) * truth.y0
        assert np.array_equal(ds.outcomes, expected)

    def test_clipped_normal_mean_against_monte_carlo(self):
        rng = np.random.default_rng(8)
        for mu, sigma in [(0.0, 0.5), (0.9, 0.2), (-1.4, 0.7)]:
            draws = np.clip(rng.normal(mu, sigma, size=2_000_000), -1.0, 1.0)
            assert clipped_normal_mean(mu, sigma, -1.0, 1.0) == pytest.approx(
                draws.mean(), abs=2e-3)
        assert clipped_normal_mean(3.0, 0.0, -1.0, 1.0) == 1.0

    def test_true_tau_matches_conditional_mean_under_clipping(self):
        dgp = default_dgps()["bounded_nonlinear"]
        x = np.array([[0.8, -0.3] + [0.0] * 8])
        rng = np.random.default_rng(9)
        mu0 = dgp.baseline(x)[0]
        tau = dgp.effect(x)[0]
        y1 = np.clip(mu0 + tau + rng.normal(0, dgp.noise_sigma, 2_000_000), -1, 1)
        y0 = np.clip(mu0 + rng.normal(0, dgp.noise_sigma, 2_000_000), -1, 1)
        assert true_tau(dgp, x)[0] == pytest.approx(y1.mean() - y0.mean(), abs=2e-3)

    def test_registry_and_resolve(self):
        assert set(default_dgps()) == {"interaction", "interaction_weak", "step",
                                       "high_frequency", "high_frequency_weak",
                                       "bounded_nonlinear"}
        assert resolve_dgp("step").tau_form == EffectForm.STEP
        spec = resolve_dgp({"name": "inline", "mu0_form": "linear", "tau_form": "constant",
                            "noise_sigma": 0.1})
        assert spec.tau_form == EffectForm.CONSTANT
        with pytest.raises(ParameterError):
            resolve_dgp("nope")

    def test_json_round_trip(self):
        dgp = default_dgps()["bounded_nonlinear"]
        assert DgpSpec.from_json(dgp.to_json()) == dgp


class TestRunReplication:
    def test_injected_true_function_scores_zero(self):
        # strategies whose single-candidate output is the candidate itself;
        # unnormalized regimes rescale the lone candidate and keep noise

        def true_model(X, y, z, p):
            return CateModel(lambda q: 2.0 * q[:, 0], "injected_truth")

        config = tiny_config(roster=(true_model,),
                             strategies=(Strategy.CAUSAL_STACK, Strategy.ORACLE_SELECT,
                                         Strategy.PLUGIN_SELECT))
        record = run_replication(config, 0)
        for strategy, mse in record.mse.items():
            assert mse == 0.0, strategy

    def test_oracle_with_single_candidate_scores_that_candidate(self):
        config = tiny_config(roster=(cheap_roster()[0],),
                             strategies=(Strategy.ORACLE_SELECT,))
        record = run_replication(config, 0)
        assert record.selected["oracle_select"] == 0

    def test_selected_index_matches_library_functions(self):
        from catestack.dgp import generate_dataset as gen
        from catestack.dataset import split as do_split
        from catestack.selection_eval import EvaluationSample, oracle_select
        from catestack.metalearners import fit_candidate_library
        from catestack.seeding import derive_seed

        config = tiny_config(strategies=(Strategy.ORACLE_SELECT,))
        record = run_replication(config, 1)
        ds, _ = gen(config.dgp, config.n_pool, config.p, config.design,
                    derive_seed(config.master_seed, "data", 1))
        ds_split = do_split(ds, config.alpha, derive_seed(config.master_seed, "split", 1))
        tr, av = ds_split.train_indices, ds_split.avg_indices
        roster = [s.reseed(derive_seed(config.master_seed, "lib", 1, i))
                  for i, s in enumerate(config.roster)]
        candidates = fit_candidate_library(ds.covariates[tr], ds.outcomes[tr],
                                           ds.assignments[tr], roster, config.p)
        sample = EvaluationSample(covariates=ds.covariates[av],
                                  true_tau=true_tau(config.dgp, ds.covariates[av]))
        assert record.selected["oracle_select"] == oracle_select(candidates, sample)

    def test_completely_randomized_design_end_to_end(self):
        config = tiny_config(design=Design.COMPLETELY_RANDOMIZED,
                             strategies=(Strategy.CAUSAL_STACK, Strategy.R_STACK))
        record = run_replication(config, 0)
        assert set(record.mse) == {"causal_stack", "r_stack"}
        assert all(np.isfinite(v) for v in record.mse.values())

    def test_stacked_never_worse_than_best_candidate_plus_bound(self):
        from catestack.selection_eval import BoundParams, regret_bound
        config = tiny_config(strategies=(Strategy.CAUSAL_STACK, Strategy.ORACLE_SELECT))
        record = run_replication(config, 2)
        params = BoundParams(L=3.0, K=len(config.roster), delta=0.05,
                             alpha=config.alpha, n=config.n_pool)
        assert record.mse["causal_stack"] <= record.mse["oracle_select"] + regret_bound(params)


class TestRunBenchmark:
    def test_single_record_echoed(self):
        config = tiny_config(replications=1, strategies=(Strategy.CAUSAL_STACK,))
        report = run_benchmark(config)
        assert len(report.records) == 1
        assert report.mean_mse()["causal_stack"] == report.records[0].mse["causal_stack"]

    def test_identical_strategies_tie(self):
        config = tiny_config(roster=(cheap_roster()[0],), replications=2,
                             strategies=(Strategy.ORACLE_SELECT, Strategy.PLUGIN_SELECT))
        report = run_benchmark(config)
        wins, ties = report.win_rates()
        assert ties["oracle_select"]["plugin_select"] == 1.0
        assert wins["oracle_select"]["plugin_select"] == 0.0

    def test_deterministic_and_jobs_invariant(self):
        config = tiny_config(replications=3)
        a = canonical_json(run_benchmark(config, jobs=1).to_json())
        b = canonical_json(run_benchmark(config, jobs=2).to_json())
        assert a == b

    def test_strategy_subset_is_paired(self):
        base = tiny_config(strategies=(Strategy.CAUSAL_STACK,))
        both = tiny_config(strategies=(Strategy.CAUSAL_STACK, Strategy.PLUGIN_SELECT))
        mse_a = [r.mse["causal_stack"] for r in run_benchmark(base).records]
        mse_b = [r.mse["causal_stack"] for r in run_benchmark(both).records]
        assert mse_a == mse_b

    def test_failure_threshold_aborts(self):
        def broken(X, y, z, p):
            raise RuntimeError("boom")

        config = tiny_config(roster=(broken,), replications=3)
        with pytest.raises(RuntimeError, match="replications failed"):
            run_benchmark(config)

    def test_report_json_schema(self):
        config = tiny_config(replications=2)
        payload = run_benchmark(config).to_json()
        assert set(payload) == {"config_digest", "config", "candidate_labels",
                                "per_replication", "failures", "aggregates"}
        assert set(payload["aggregates"]) == {"mean_mse", "win_rates", "tie_rates",
                                              "mean_weights", "n_failures"}
        assert len(payload["per_replication"]) == 2
        assert "timing" not in canonical_json(payload)

    def test_win_tie_rates_sum_to_one(self):
        config = tiny_config(replications=2)
        report = run_benchmark(config)
        wins, ties = report.win_rates()
        a, b = "causal_stack", "oracle_select"
        assert wins[a][b] + wins[b][a] + ties[a][b] == 1.0


class TestAblation:
    def test_reduced_roster_identity_when_small(self):
        config = tiny_config(roster=cheap_roster()[:3], replications=2)
        suite = ablation_suite(config)
        full = canonical_json(suite["roster_full"].to_json())
        reduced = canonical_json(suite["roster_reduced"].to_json())
        assert full == reduced

    def test_reduced_roster_picks_middle_three(self):
        roster = cheap_roster()
        assert [s.label for s in reduced_roster(roster)] == ["ridge_t", "cart_s", "knn_t"]

    def test_constraint_arm_contains_all_variants(self):
        config = tiny_config(replications=1)
        suite = ablation_suite(config)
        record = suite["constraints"].records[0]
        assert set(record.mse) == {"causal_stack", "causal_stack_no_l1",
                                   "causal_stack_unconstrained", "r_stack"}

    def test_mu_arms_share_data_seeds(self):
        config = tiny_config(replications=2)
        suite = ablation_suite(config)
        strong = suite["mu_strong"].records
        weak = suite["mu_weak"].records
        assert [r.rep_index for r in strong] == [r.rep_index for r in weak]
        assert suite["mu_strong"].config.master_seed == suite["mu_weak"].config.master_seed


class TestSuite:
    def test_table_shape(self):
        config = tiny_config(replications=1)
        suite = run_suite(config, [LINEAR_DGP, "step"], [0.3, 0.5])
        assert len(suite.cells) == 4
        rows = suite.win_share_table(Strategy.CAUSAL_STACK, Strategy.ORACLE_SELECT)
        assert [r["p"] for r in rows] == [0.3, 0.5]
        for row in rows:
            total = row["causal_stack"] + row["oracle_select"] + row["tie"]
            assert total == pytest.approx(1.0)

    def test_report_rendering_is_reproducible(self, tmp_path):
        import json
        config = tiny_config(replications=2)
        report = run_benchmark(config)
        write_report_json(report, tmp_path / "r.json")
        payload = json.loads((tmp_path / "r.json").read_text())
        first = render_report_tables(payload, tmp_path / "t1")
        second = render_report_tables(payload, tmp_path / "t2")
        for f1, f2 in zip(first, second):
            assert f1.read_bytes() == f2.read_bytes()
