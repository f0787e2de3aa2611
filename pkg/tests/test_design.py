import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sim2real_lab.design import (
    check_cover_traj,
    cover_traj,
    cover_traj_policy,
    cover_traj_schedule,
    dead_coordinates,
    faithful_checkpoints,
    lambda_star,
    lambda_star_bruteforce,
    learn_exp_policies,
    max_visit_probability,
    reachability_estimate,
    uncovered_mass,
)
from sim2real_lab.errors import BudgetError, ConfigurationError
from sim2real_lab.instances import make_comb_lock_d1, make_random_lowrank
from sim2real_lab.mdp import LowRankFactorization, TabularMDP, feature_covariance, occupancy_measures
from sim2real_lab.policies import constant_action, randomize_after


def scalar_feature_mdp(S=3, A=2, H=3, seed=0):
    """phi = 1 everywhere, so every policy has covariance [1]."""
    rng = np.random.default_rng(seed)
    mu = rng.dirichlet(np.ones(S), size=(H, 1))
    fac = LowRankFactorization(np.ones((S, A, 1)), mu)
    return TabularMDP(fac.kernel(), rng.random((H, S, A)), 0, fac)


def all_pairs(m):
    return [(s, a) for s in range(m.num_states) for a in range(m.num_actions)]


# --- exact reach ----------------------------------------------------------


def test_uncovered_mass_endpoints(d1):
    assert uncovered_mass(d1.sim, 5, all_pairs(d1.sim)) == 0.0
    assert uncovered_mass(d1.sim, 5, []) == 1.0
    assert uncovered_mass(d1.sim, 11, [(1, 0), (1, 1)]) == 1.0


def test_lock_visit_probability(d1):
    assert max_visit_probability(d1.sim, 12, [(0, 0)]) == 0.5


def test_counterexample_reachability(d2):
    for h in (1, 2):
        assert lambda_star(d2.sim, h) == pytest.approx(0.5, abs=1e-6)
        assert lambda_star_bruteforce(d2.sim, h) == pytest.approx(0.5, abs=1e-12)


def test_one_hot_first_step_has_dead_coordinates(f1):
    assert dead_coordinates(f1.sim, 1) == [2, 3]
    assert lambda_star(f1.sim, 1) == pytest.approx(0.0, abs=1e-7)


@pytest.mark.parametrize("seed", range(4))
def test_sdp_matches_enumeration(seed):
    b = make_random_lowrank(3, 2, 3, 2, 0.1, seed)
    for h in (1, 2):
        exact, grid = lambda_star(b.sim, h), lambda_star_bruteforce(b.sim, h)
        # the weight grid certifies a lower bound within grid resolution
        assert grid <= exact + 1e-7
        assert exact - grid <= 1e-3


# --- design loop --------------------------------------------------------


def test_counterexample_design_reaches_optimum(d2):
    for h in (1, 2):
        des = learn_exp_policies(d2.sim, h)
        assert 0.45 <= des.min_eig <= 0.5 + 1e-9


def test_scalar_features_converge_in_one_round():
    des = learn_exp_policies(scalar_feature_mdp(), 2)
    assert des.history[0] == pytest.approx(1.0, abs=1e-12)
    assert des.min_eig == pytest.approx(1.0, abs=1e-12)


def test_design_reports_mixture_covariance(d2):
    des = learn_exp_policies(d2.sim, 1)
    cov = feature_covariance(d2.sim, des.mixture(), 1)
    assert des.min_eig == pytest.approx(cov.min_eig, abs=1e-8)
    assert np.allclose(des.covariance, cov.matrix, atol=1e-8)
    assert np.allclose(des.weights.sum(), 1.0)


def test_lock_design_meets_the_guarantee():
    b = make_comb_lock_d1(6, 0.125)
    d = b.sim.factorization.dim
    for h in range(2, 7):
        des = learn_exp_policies(b.sim, h)
        opt = lambda_star_bruteforce(b.sim, h)
        assert des.min_eig >= opt / (8 * d) - 1e-12
        assert des.min_eig <= opt + 1e-9


def test_unreachable_direction_warns(f1):
    with pytest.warns(RuntimeWarning, match=r"\[2, 3\]"):
        des = learn_exp_policies(f1.sim, 1)
    assert des.min_eig == pytest.approx(0.0, abs=1e-10)


def test_faithful_mode_runs_to_budget(d2):
    des = learn_exp_policies(d2.sim, 1, mode="faithful", max_rounds=64)
    assert des.mode == "faithful" and des.rounds == 64 and des.stop_reason == "max_rounds"
    assert des.min_eig >= 0.45


def test_faithful_checkpoints_are_increasing():
    cps = faithful_checkpoints(1000)
    assert cps == sorted(cps) and cps[0] == 4 and cps[-1] <= 1000


def test_design_input_errors(d2):
    with pytest.raises(ConfigurationError):
        learn_exp_policies(d2.sim, 1, zeta=0)
    with pytest.raises(ConfigurationError):
        learn_exp_policies(d2.sim, 3)
    with pytest.raises(ConfigurationError):
        learn_exp_policies(TabularMDP(d2.sim.transitions, d2.sim.rewards), 1)


def test_randomize_after_on_the_lock(d1):
    H = 12
    pol = randomize_after(constant_action(H, 2, 2, 0), H - 2)
    w = occupancy_measures(d1.sim, pol).step(H - 1)
    assert w[0].tolist() == [0.5, 0.5]


# --- CoverTraj --------------------------------------------------------------


def test_schedule_arithmetic():
    m, gammas, sizes = cover_traj_schedule(2, 0.5)
    assert (m, gammas) == (1, [1.0])
    assert sizes == [math.ceil(96 * math.log(192))]


@given(st.integers(1, 8), st.sampled_from([1 / 2, 1 / 4, 1 / 8]))
def test_schedule_total_sits_inside_the_lemma_range(d, beta):
    # run for every step, the total is H times the per-step total
    _, _, sizes = cover_traj_schedule(d, beta)
    per_step = sum(sizes)
    assert 12 * d / beta**2 <= per_step <= 48 * d / beta**2 * math.log(48 * d / beta**2)


def test_schedule_rejects_bad_beta():
    with pytest.raises(ConfigurationError):
        cover_traj_schedule(2, 0.0)


def test_identical_features_are_covered_in_one_stage():
    m = scalar_feature_mdp()
    out = cover_traj(m, 2, 0.5)
    assert set(out.covered[0]) == set(all_pairs(m))
    assert uncovered_mass(m, 2, out.assigned()) == 0.0


@pytest.mark.parametrize("h", [1, 2])
def test_cover_traj_guarantees_on_counterexample(d2, h):
    out = cover_traj(d2.sim, h, 0.25, seed=3)
    chk = check_cover_traj(d2.sim, out)
    assert chk.passed, chk
    assert chk.uncovered_mass <= 0.25


def test_cover_traj_is_deterministic(d2):
    a, b = cover_traj(d2.sim, 2, 0.25, seed=5), cover_traj(d2.sim, 2, 0.25, seed=5)
    assert a.data.tuples() == b.data.tuples()
    assert all(np.array_equal(x, y) for x, y in zip(a.covariances, b.covariances))
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_cover_traj_data_and_policies(d2):
    out = cover_traj(d2.sim, 2, 0.5)
    assert len(out.data) == out.total_episodes * 2
    assert sum(out.policy_counts) == out.total_episodes
    pol = cover_traj_policy(d2.sim, out, 0)
    assert np.allclose(pol.probs[1], 0.25)


def test_cover_traj_budget_guard(d2):
    with pytest.raises(BudgetError):
        cover_traj(d2.sim, 1, 1 / 64, max_episodes=1000)


# --- coverage report --------------------------------------------------------


def test_reachability_of_counterexample(d2):
    rep = reachability_estimate(d2.sim)
    assert rep.lambda_min_star == pytest.approx(0.5, abs=1e-3)
    for step in rep.steps:
        assert step.lambda_hat <= step.lambda_exact + 1e-6


def test_reachability_of_scalar_features():
    rep = reachability_estimate(scalar_feature_mdp(), exact=False)
    assert rep.lambda_min_star == pytest.approx(1.0, abs=1e-12)


def test_reachability_names_dead_coordinates(f1):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = reachability_estimate(f1.sim, max_rounds=200, exact=False)
    assert rep.step(1).dead_coordinates == (2, 3)
    assert rep.step(1).lambda_hat == 0.0
    assert any("[2, 3]" in str(w.message) for w in caught)
