"""Effect-model libraries, doubly-robust stacking and benchmark tooling."""

from .dataset import (DataSplit, Design, ExperimentDataset, PotentialOutcomeTable,
                      assign_treatments, load_csv, save_csv, split)
from .dgp import BaselineForm, DgpSpec, EffectForm, default_dgps, generate_dataset, true_tau
from .ensemble import (StackedCateModel, StackingProblem, WeightRegime, WeightVector,
                       averaging_loss, build_plugin_problem, build_r_stacking_problem,
                       gram, project_simplex, solve_stacking)
from .metalearners import (CateAlgorithmSpec, CateModel, MetaFramework, default_roster,
                           fit_candidate_library, fit_constant_diff, fit_r_learner,
                           fit_s_learner, fit_t_learner, fit_x_learner)
from .pseudo import (MuFitMode, PseudoOutcomeVector, aipw_pseudo_outcome,
                     build_pseudo_outcomes, enumerate_conditional_mean)
from .regressors import (RegressorKind, RegressorSpec, cross_val_mse, fit_regressor)
from .selection_eval import (BoundParams, EvaluationSample, evaluation_sample,
                             oracle_select, pehe, pehe_squared, plugin_select,
                             regret_bound, regret_experiment)
from .benchmark import (ExperimentConfig, ReplicationReport, Strategy, ablation_suite,
                        run_benchmark, run_replication, run_suite)

__version__ = "0.1.0"
