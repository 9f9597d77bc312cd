import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def regret_run():
    """Shared 200-trial bound experiment (feeds several acceptance criteria)."""
    from catestack.dgp import default_dgps
    from catestack.selection_eval import BoundParams, regret_experiment

    params = BoundParams(L=1.0, K=5, delta=0.05, alpha=1.0 / 3.0, n=2000)
    return regret_experiment(
        default_dgps()["bounded_nonlinear"], params, trials=200, seed=1205,
        p=0.5, eval_size=20000, jobs=2,
    )


@pytest.fixture(scope="session")
def headline_suite():
    """Shared 6-process, 50-replication comparison at p = 0.5."""
    from catestack.benchmark import ExperimentConfig, Strategy, run_suite
    from catestack.dgp import default_dgps

    dgps = list(default_dgps().values())
    base = ExperimentConfig(
        dgp=dgps[0], n_pool=3000, alpha=1.0 / 3.0, n_test=1802, p=0.5,
        replications=50,
        strategies=(Strategy.CAUSAL_STACK, Strategy.ORACLE_SELECT),
        master_seed=61,
    )
    return run_suite(base, dgps, [0.5], jobs=2)
