import math

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from conftest import random_mdp
from sim2real_lab.errors import ConfigurationError
from sim2real_lab.instances import make_comb_lock_d1
from sim2real_lab.mdp import optimal_policy_vi, sample_trajectory
from sim2real_lab.policies import QFunction, uniform
from sim2real_lab.regression import (
    FQILearner,
    TransitionDataset,
    constrained_fqi,
    effective_log_cardinality,
    fqi,
    greedy_policy,
    lsq_regress,
    seed_buffer,
)

dyadic = st.integers(0, 64).map(lambda k: k / 64)


def _dataset_from_counts(mdp, counts_scale):
    """Every (h, s, a) with next states at exact frequencies ``P * counts_scale``."""
    rows = []
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    for k in range(H):
        for s in range(S):
            for a in range(A):
                for s2 in range(S):
                    n = int(round(mdp.transitions[k, s, a, s2] * counts_scale))
                    rows += [(k + 1, s, a, float(mdp.rewards[k, s, a]), s2)] * n
    return TransitionDataset.from_tuples(rows)


# --- least squares --------------------------------------------------------


def test_single_datum_table():
    out = lsq_regress([(1, 0, 0.75)], 2, 2, default_value=0.1)
    assert out[1, 0] == 0.75
    assert np.all(np.delete(out.ravel(), 2) == 0.1)


def test_two_targets_average():
    assert lsq_regress([(0, 0, 0.0), (0, 0, 1.0)], 1, 1)[0, 0] == 0.5


def test_empty_data_is_default():
    assert np.all(lsq_regress([], 3, 2, default_value=0.3) == 0.3)


def test_output_is_clipped():
    out = lsq_regress([(0, 0, 5.0), (0, 1, -1.0)], 1, 2, v_max=2.0)
    assert out.tolist() == [[2.0, 0.0]]


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 1), st.floats(0, 3)), min_size=1, max_size=30),
       st.integers(0, 2**31))
def test_least_squares_beats_perturbations(data, seed):
    table = lsq_regress(data, 3, 2, v_max=3.0)
    s, a, y = (np.array(c) for c in zip(*data))

    def loss(t):
        return float(((t[s, a] - y) ** 2).sum())

    base = loss(table)
    rng = np.random.default_rng(seed)
    pert = table[None] + rng.normal(0, 0.5, size=(1000, 3, 2))
    losses = ((pert[:, s, a] - y) ** 2).sum(-1)
    assert np.all(losses >= base - 1e-9)


# --- fitted Q-iteration ---------------------------------------------------


def test_empty_dataset_gives_default_everywhere():
    q = fqi(TransitionDataset.empty(), 3, 2, 2, default_value=0.4)
    assert np.all(q.values == 0.4)


@given(st.integers(0, 10_000))
def test_deterministic_mdp_recovers_q_star(seed):
    m = random_mdp(seed, 3, 2, 4, sparse=True)
    data = _dataset_from_counts(m, 1)
    assert np.allclose(fqi(data, 4, 3, 2).values, optimal_policy_vi(m).q.values, atol=1e-12)


def test_exact_frequencies_make_fqi_value_iteration():
    b = make_comb_lock_d1(12, 0.125, "zeroed")
    data = _dataset_from_counts(b.real, 16)
    q = fqi(data, 12, 2, 2)
    assert np.allclose(q.values, optimal_policy_vi(b.real).q.values, atol=1e-12)
    assert greedy_policy(q).probs[10, 0].argmax() == 0  # a1 at (s1, H-1)


@given(st.integers(0, 10_000))
def test_fqi_is_clipped(seed):
    m = random_mdp(seed, 3, 2, 4)
    rng = np.random.default_rng(seed)
    trajs = [sample_trajectory(m, uniform(4, 3, 2), rng) for _ in range(5)]
    q = fqi(TransitionDataset.from_trajectories(trajs), 4, 3, 2, default_value=4.0)
    assert np.all(q.values >= 0) and np.all(q.values <= 4)


@given(st.sampled_from([1, 2, 4, 8, 16]).flatmap(lambda n: st.lists(dyadic, min_size=n, max_size=n)),
       st.integers(0, 1), st.integers(0, 1))
def test_adding_the_cell_mean_changes_nothing(targets, s, a):
    # power-of-two counts keep the dyadic cell mean exactly representable
    data = TransitionDataset.from_tuples([(2, s, a, r, 0) for r in targets])
    before = fqi(data, 2, 2, 2)
    extra = TransitionDataset.from_tuples([(2, s, a, float(before.values[1, s, a]), 0)])
    after = fqi(data.concat(extra), 2, 2, 2)
    assert np.array_equal(before.values, after.values)


def test_greedy_of_lock_q_functions(f1):
    assert greedy_policy(optimal_policy_vi(f1.sim).q).probs[0, 0].argmax() == 1
    assert greedy_policy(optimal_policy_vi(f1.real).q).probs[0, 0].argmax() == 0
    assert np.all(greedy_policy(QFunction.constant(2, 2, 3, 1.0)).probs[..., 0] == 1)


# --- constrained fit --------------------------------------------------------


def _two_sources(seed, n=40):
    rng = np.random.default_rng(seed)
    m = random_mdp(seed, 3, 2, 3)
    shifted = m.with_rewards(np.clip(m.rewards + rng.uniform(-0.4, 0.4, m.rewards.shape), 0, 1))
    real = TransitionDataset.from_trajectories([sample_trajectory(m, uniform(3, 3, 2), rng) for _ in range(n)])
    sim = TransitionDataset.from_trajectories([sample_trajectory(shifted, uniform(3, 3, 2), rng) for _ in range(n)])
    return real, sim


@given(st.integers(0, 5000))
def test_huge_gamma_is_plain_fqi(seed):
    real, sim = _two_sources(seed)
    rep = constrained_fqi(real, sim, math.inf, 3, 3, 2)
    assert np.array_equal(rep.f_hat.values, fqi(real, 3, 3, 2).values)
    assert not rep.active.any()


@given(st.integers(0, 5000))
def test_zero_gamma_pins_sim_cells(seed):
    real, sim = _two_sources(seed, n=6)
    rep = constrained_fqi(real, sim, 0.0, 3, 3, 2)
    n_s = sim.counts(3, 3, 2)
    assert np.array_equal(rep.f_hat.values[n_s > 0], rep.f_sim.values[n_s > 0])
    assert np.all(rep.residuals == 0)


@given(st.integers(0, 5000), st.floats(1e-4, 0.05))
@example(seed=100, gamma=0.046875)  # sim-only cells make the lambda = 0 fit infeasible but the limit feasible
def test_constraint_holds_with_equality_when_active(seed, gamma):
    real, sim = _two_sources(seed)
    rep = constrained_fqi(real, sim, gamma, 3, 3, 2)
    assert np.all(rep.residuals <= gamma + 1e-8)
    assert np.all(np.abs(rep.residuals[rep.active] - gamma) <= 1e-8)


@given(st.integers(0, 5000))
def test_constrained_fit_beats_feasible_perturbations(seed):
    rng = np.random.default_rng(seed)
    real = TransitionDataset.from_tuples([(1, int(rng.integers(3)), int(rng.integers(2)), float(rng.random()), 0)
                                          for _ in range(30)])
    sim = TransitionDataset.from_tuples([(1, int(rng.integers(3)), int(rng.integers(2)), float(rng.random()), 0)
                                         for _ in range(30)])
    gamma = 0.01
    rep = constrained_fqi(real, sim, gamma, 1, 3, 2, v_max=1.0)
    f, g = rep.f_hat.values[0], rep.f_sim.values[0]
    n_s = sim.counts(1, 3, 2)[0]

    def objective(t):
        return float(((t[real.s, real.a] - real.r) ** 2).sum())

    def residual(t):
        return float((n_s * (t - g) ** 2).sum() / n_s.sum())

    base = objective(f)
    for _ in range(1000):
        cand = np.clip(f + rng.normal(0, 0.05, size=f.shape), 0, 1)
        if residual(cand) <= gamma:
            assert objective(cand) >= base - 1e-9


def test_negative_gamma_rejected():
    with pytest.raises(ConfigurationError):
        constrained_fqi(TransitionDataset.empty(), TransitionDataset.empty(), -1.0, 2, 2, 2)


# --- incremental learner and buffers --------------------------------------


@given(st.integers(0, 10_000))
def test_incremental_learner_equals_batch_fqi(seed):
    m = random_mdp(seed, 3, 2, 4)
    rng = np.random.default_rng(seed)
    learner = FQILearner(4, 3, 2)
    trajs = []
    for _ in range(6):
        traj = sample_trajectory(m, uniform(4, 3, 2), rng)
        trajs.append(traj)
        learner.observe(traj)
        assert np.array_equal(learner.q.values, fqi(TransitionDataset.from_trajectories(trajs), 4, 3, 2).values)


def test_refit_period_delays_updates():
    m = random_mdp(0, 3, 2, 3)
    rng = np.random.default_rng(0)
    learner = FQILearner(3, 3, 2, refit_period=3)
    q0 = learner.q
    learner.observe(sample_trajectory(m, uniform(3, 3, 2), rng))
    assert learner.q is q0
    learner.observe(sample_trajectory(m, uniform(3, 3, 2), rng))
    learner.observe(sample_trajectory(m, uniform(3, 3, 2), rng))
    assert learner.q is not q0


def test_fresh_learner_is_default_table():
    assert np.all(FQILearner(3, 2, 2, default_value=0.25).q.values == 0.25)


@pytest.mark.parametrize("mode", ["one_per_sah", "one_per_sah_adversarial"])
def test_seeded_buffer_fills_every_cell(d1, mode):
    data = seed_buffer(d1.real, mode, seed=1)
    assert np.all(data.counts(12, 2, 2) == 1)


def test_adversarial_buffer_picks_the_worse_outcome(d1):
    data = seed_buffer(d1.real, "one_per_sah_adversarial")
    row = [t for t in data.tuples() if t[:3] == (11, 0, 0)][0]
    assert row[4] == 1  # a1 at the lock is recorded as falling to s2


def test_unknown_buffer_mode():
    with pytest.raises(ConfigurationError):
        seed_buffer(random_mdp(0), "everything")


# --- serialization ----------------------------------------------------------


@given(st.lists(st.tuples(st.integers(1, 5), st.integers(0, 3), st.integers(0, 2),
                          st.floats(0, 1, allow_subnormal=True), st.integers(0, 3)), max_size=20))
def test_dataset_csv_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "d.csv"
    data = TransitionDataset.from_tuples(rows)
    data.to_csv(path)
    assert TransitionDataset.from_csv(path).tuples() == data.tuples()


def test_dataset_csv_needs_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,0,0,0.5,1\n")
    with pytest.raises(ConfigurationError):
        TransitionDataset.from_csv(path)


def test_effective_log_cardinality():
    assert effective_log_cardinality(2, 2, 12) == pytest.approx(48 * math.log(1201))
