import math

import numpy as np
import pytest

from conftest import random_mdp
from sim2real_lab.errors import ConfigurationError
from sim2real_lab.instances import make_comb_lock_d1, make_random_lowrank
from sim2real_lab.mdp import optimal_policy_vi, policy_value_exact
from sim2real_lab.policies import constant_action, uniform
from sim2real_lab.regression import TransitionDataset, fqi, greedy_policy
from sim2real_lab.transfer import (
    DesignExplorer,
    FQIOptimizer,
    Sim2ExploreSchedule,
    ZetaGreedyOptimizer,
    _greedy_cdf,
    design_zeta,
    direct_transfer_protocol,
    explore_real,
    exploration_policies,
    exploration_transfer,
    hoeffding_half_width,
    meta_transfer,
    monte_carlo_value,
    play,
    sim2explore,
    zeta_greedy_protocol,
)

EPS = 0.125


def _check_record(rec, T):
    assert rec.real_episodes <= T
    eps = [p.episode for p in rec.probes]
    assert eps == sorted(eps) and len(set(eps)) == len(eps)
    assert all(np.diff([p.real_steps for p in rec.probes]) >= 0)
    assert all(np.diff([p.sim_episodes for p in rec.probes]) >= 0)
    assert 0 <= rec.final_suboptimality <= rec.config["H"]
    assert rec.probes[-1].exact_suboptimality == rec.final_suboptimality


@pytest.fixture(scope="module")
def easy():
    """A small factorized pair with no gap, for sanity runs."""
    b = make_random_lowrank(3, 2, 3, 2, 0.0, seed=4)
    return b.sim, b.sim


# --- zeta-greedy ----------------------------------------------------------


def test_full_exploration_is_uniform():
    cdf = _greedy_cdf(np.random.default_rng(0).random((3, 2, 4)), 1.0)
    assert np.allclose(cdf, np.cumsum(np.full(4, 0.25)))


def test_zero_zeta_has_no_forced_exploration():
    m = random_mdp(1, 3, 2, 4, sparse=True)
    a = zeta_greedy_protocol(m, 0.0, 30, seed=1)
    b = zeta_greedy_protocol(m, 0.0, 30, seed=2)
    assert np.array_equal(a.returns, b.returns)


def test_zeta_greedy_record(d1_zeroed):
    rec = zeta_greedy_protocol(d1_zeroed.real, 0.1, 300, seed=0, eval_stride=50)
    _check_record(rec, 300)
    assert [p.episode for p in rec.probes] == list(range(50, 301, 50))
    assert rec.sim_episodes == 0
    assert rec.config["refit_period"] == 1


def test_zeta_greedy_locks_into_a2(d1_zeroed):
    first = []
    for seed in range(10):
        rec = zeta_greedy_protocol(d1_zeroed.real, 0.1, 5000, seed=seed, buffer_init="one_per_sah_adversarial",
                                   eval_stride=5000)
        first.append(int(rec.final_policy.probs[0, 0].argmax()))
    assert first.count(1) >= 9


def test_zeta_greedy_rejects_bad_zeta(d1):
    with pytest.raises(ConfigurationError):
        zeta_greedy_protocol(d1.real, 1.5, 10, seed=0)


# --- direct transfer ------------------------------------------------------


def test_direct_transfer_without_gap(easy):
    sim, real = easy
    rec = direct_transfer_protocol(sim, real, 0.5, 2000, seed=0)
    _check_record(rec, 2000)
    assert rec.final_suboptimality <= 1e-3


def test_direct_transfer_never_corrects_the_lock(d1_zeroed):
    bad = sum(
        direct_transfer_protocol(d1_zeroed.sim, d1_zeroed.real, 0.1, 5000, seed=s).final_suboptimality >= EPS / 4
        for s in range(10)
    )
    assert bad >= 9


def test_sim_optimum_obeys_the_simulation_lemma(d1_zeroed):
    pi = optimal_policy_vi(d1_zeroed.sim).policy
    gap = optimal_policy_vi(d1_zeroed.real).v0 - policy_value_exact(d1_zeroed.real, pi).v0
    assert 0 <= gap <= 2 * 12**2 * EPS


# --- exploration transfer -------------------------------------------------


def test_design_zeta_clamps():
    assert design_zeta(2, 12, 0.01) == (pytest.approx(4 * 8 * 0.01 / 12), False)
    assert design_zeta(4, 2, 1.0) == (1.0, True)
    assert design_zeta(2, 10**9, 1e-6) == (1e-6, True)


def test_exploration_transfer_budget_and_selection(easy):
    sim, real = easy
    T = 403
    rec = exploration_transfer(sim, real, 0.1, 0.1, T, seed=3)
    assert rec.real_episodes == T // 2 + 2 * (T // 4)
    _check_record(rec, T)
    est = rec.extras["estimates"]
    expect = "pi_f" if est["pi_f"] >= est["pi_sim*"] else "pi_sim*"
    assert rec.extras["selected"] == expect


def test_exploration_transfer_needs_budget(easy):
    with pytest.raises(ConfigurationError):
        exploration_transfer(*easy, 0.1, 0.1, 7, seed=0)


def test_exploration_transfer_without_gap(easy):
    sim, real = easy
    ok = sum(exploration_transfer(sim, real, 0.1, 0.1, 2000, seed=s).final_suboptimality <= 0.1 for s in range(10))
    assert ok >= 9


def test_exploration_transfer_opens_the_lock(d1_zeroed):
    rec = exploration_transfer(d1_zeroed.sim, d1_zeroed.real, EPS / 8, 0.1, 20000, seed=0, eval_stride=1000)
    assert rec.final_suboptimality <= EPS / 4
    assert rec.extras["design_warnings"]  # one-hot step-1 features have dead coordinates


def test_fallback_to_sim_policy():
    # with a tiny budget FQI sees almost nothing; the sim optimum wins the comparison
    b = make_comb_lock_d1(6, EPS, "zeroed")
    rec = exploration_transfer(b.sim, b.sim, 0.1, 0.1, 8, seed=0)
    est = rec.extras["estimates"]
    if est["pi_sim*"] > est["pi_f"]:
        assert rec.extras["selected"] == "pi_sim*"
        assert rec.final_policy is not None


def test_exploration_mixture_is_over_steps(d2):
    pi_exp, designs, _ = exploration_policies(d2.sim, 0.01)
    assert len(designs) == d2.sim.horizon
    assert min(d.min_eig for d in designs) >= 0.45
    assert abs(sum(pi_exp.weights) - 1) < 1e-12


# --- constrained exploration and the doubling schedule ----------------------


def test_explore_real_with_huge_gamma_is_fqi(easy):
    sim, real = easy
    pol, rep, batch = explore_real(real, [uniform(3, 3, 2)], 200, TransitionDataset.empty(), math.inf, seed=0)
    data = TransitionDataset.from_batch(batch)
    assert np.array_equal(pol.probs, greedy_policy(fqi(data, 3, 3, 2)).probs)


def test_explore_real_with_zero_gamma_pins_to_sim(easy):
    sim, real = easy
    sim_batch = play(sim, uniform(3, 3, 2), 9, "sim", 0, 0, 400)
    sim_data = TransitionDataset.from_batch(sim_batch)
    _, rep, _ = explore_real(real, [uniform(3, 3, 2)], 200, sim_data, 0.0, seed=0)
    covered = sim_data.counts(3, 3, 2) > 0
    assert np.array_equal(rep.f_hat.values[covered], rep.f_sim.values[covered])


def test_schedule_arithmetic():
    sched = Sim2ExploreSchedule.build(T=800, delta=0.1, epsilon=0.01, H=10, A=2, d=4, log_f=0.0, iota=3)
    assert sched.gammas[2] == 15.625
    assert list(sched.eps_bar) == [0.5, 0.25, 0.125]
    assert all(np.diff(sched.gammas) < 0) and all(np.diff(sched.betas) < 0)
    assert sched.T_round == 800 // 6
    with pytest.raises(ConfigurationError):
        Sim2ExploreSchedule.build(T=20, delta=0.1, epsilon=0.01, H=10, A=2, d=4, log_f=0.0, iota=3)


def test_default_round_count():
    sched = Sim2ExploreSchedule.build(T=10**6, delta=0.1, epsilon=0.1, H=2, A=4, d=2, log_f=0.0)
    assert sched.iota == math.ceil(math.log2(2 * 4 * 2 * 2 / 0.1))


def test_sim2explore_single_round(d2):
    rec = sim2explore(d2.sim, d2.reals[0], 400, 0.1, 0.1, seed=0, log_f=0.0, iota=1)
    _check_record(rec, 400)
    assert rec.real_episodes == 200
    assert rec.extras["selected_round"] == 1
    assert rec.sim_episodes > 0


def test_sim2explore_returns_best_estimate(d2, monkeypatch):
    # Later rounds need 2e7+ simulator episodes; coarsen coverage to test the selection rule.
    import sim2real_lab.transfer as tr

    real_cover = tr.cover_traj
    monkeypatch.setattr(tr, "cover_traj", lambda sim, h, beta, **kw: real_cover(sim, h, 0.25, **kw))
    rec = sim2explore(d2.sim, d2.reals[0], 1200, 0.1, 0.1, seed=1, log_f=0.0, iota=3)
    est = rec.extras["estimates"]
    assert rec.extras["selected_round"] == int(np.argmax(est)) + 1
    _check_record(rec, 1200)


def test_sim2explore_needs_features(d1):
    from sim2real_lab.mdp import TabularMDP

    bare = TabularMDP(d1.sim.transitions, d1.sim.rewards)
    with pytest.raises(ConfigurationError):
        sim2explore(bare, d1.real, 1000, 0.1, 0.1, seed=0)


# --- Monte Carlo ------------------------------------------------------------


def test_monte_carlo_on_a_deterministic_pair():
    m = random_mdp(2, 3, 2, 4, sparse=True)
    pol = constant_action(4, 3, 2, 1)
    est = monte_carlo_value(m, pol, 17, seed=0, delta=0.05)
    assert est.estimate == pytest.approx(policy_value_exact(m, pol).v0, abs=1e-12)
    assert est.half_width == hoeffding_half_width(4, 17, 0.05)


def test_monte_carlo_on_the_lock(d1):
    pol = constant_action(12, 2, 2, 0)
    hits = sum(abs(monte_carlo_value(d1.real, pol, 4096, seed=s).estimate - (0.5 + EPS)) <= 0.05
               for s in range(100))
    assert hits >= 99


def test_monte_carlo_needs_episodes(d1):
    with pytest.raises(ConfigurationError):
        monte_carlo_value(d1.real, uniform(12, 2, 2), 0, seed=0)


# --- meta-algorithm ---------------------------------------------------------


def test_meta_with_sim_optimum_collects_like_direct_transfer(d1_zeroed):
    pi_sim = optimal_policy_vi(d1_zeroed.sim).policy
    rec = meta_transfer(d1_zeroed.sim, d1_zeroed.real, lambda sim, T_sim, seed: ([pi_sim], 0),
                        FQIOptimizer(12, 2, 2), 0, 400, seed=0)
    assert rec.real_episodes == 200
    assert set(rec.behavior_names) == {"pi_exp"}
    # following pi_sim* never visits (s1, H-1), so the lock stays unexplored
    assert rec.final_suboptimality > 0


def test_meta_with_design_matches_exploration_transfer_mixture(d2):
    pols, used = DesignExplorer(0.01)(d2.sim, 0, 0)
    pi_exp, _, _ = exploration_policies(d2.sim, 0.01)
    assert used == 0
    assert len(pols) == len(pi_exp.components)
    for p, (_, q) in zip(pols, pi_exp.components if isinstance(pi_exp.components[0], tuple)
                         else zip(pi_exp.weights, pi_exp.components)):
        assert np.array_equal(p.probs, q.probs)


def test_meta_interface_checks(d2):
    good = FQIOptimizer(2, 2, 4)
    with pytest.raises(ConfigurationError):
        meta_transfer(d2.sim, d2.real, "nope", good, 10, 10, seed=0)
    with pytest.raises(ConfigurationError):
        meta_transfer(d2.sim, d2.real, lambda *a: [], good, 10, 10, seed=0)
    with pytest.raises(ConfigurationError):
        meta_transfer(d2.sim, d2.real, lambda *a: ([uniform(2, 2, 4)], 50), good, 10, 10, seed=0)
    with pytest.raises(ConfigurationError):
        meta_transfer(d2.sim, d2.real, lambda *a: ([uniform(2, 2, 4)], 0), object(), 10, 10, seed=0)


def test_meta_optimizer_that_plays_uses_the_whole_budget(d2):
    rec = meta_transfer(d2.sim, d2.real, DesignExplorer(0.01), ZetaGreedyOptimizer(2, 2, 4, 0.1), 0, 200, seed=0)
    assert rec.real_episodes == 200
    _check_record(rec, 200)


def test_meta_solves_the_didactic_lock(f1):
    v_star = optimal_policy_vi(f1.real).v0
    ok = sum(
        meta_transfer(f1.sim, f1.real, DesignExplorer(0.01), FQIOptimizer(10, 2, 2), 0, 20000, seed=s,
                      eval_stride=2000).final_suboptimality <= 0.1 * v_star
        for s in range(10)
    )
    assert ok >= 9
