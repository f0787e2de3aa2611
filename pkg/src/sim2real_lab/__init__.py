"""Tabular sim-to-real transfer: MDP core, regression oracles, coverage design,
transfer algorithms, instance constructors and an experiment harness."""

from .design import (
    CoverTrajOutput,
    ExplorationPolicySet,
    check_cover_traj,
    cover_traj,
    lambda_star,
    lambda_star_bruteforce,
    learn_exp_policies,
    max_visit_probability,
    reachability_estimate,
    uncovered_mass,
)
from .errors import (
    BudgetError,
    ConfigurationError,
    GenerationError,
    InvariantViolation,
    LabError,
    NumericalError,
)
from .harness import AggregateCurve, ExperimentConfig, check_suite, emit_plot, run_experiment
from .instances import (
    InstanceBundle,
    build_instance,
    make_comb_lock_d1,
    make_didactic_f1,
    make_rand_exp_counterexample,
    make_random_lowrank,
    validate_instance,
)
from .mdp import (
    LowRankFactorization,
    TabularMDP,
    feature_covariance,
    occupancy_measures,
    optimal_policy_vi,
    policy_value_exact,
    q_values_exact,
    sample_trajectory,
    tv_gap,
)
from .policies import MarkovPolicy, MixturePolicy, QFunction, greedy_of_q, mixture, randomize_after, zeta_greedy
from .regression import FQILearner, TransitionDataset, constrained_fqi, fqi, lsq_regress
from .theory import theory_diagnostics
from .transfer import (
    RunRecord,
    direct_transfer_protocol,
    exploration_transfer,
    meta_transfer,
    monte_carlo_value,
    sim2explore,
    zeta_greedy_protocol,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
