import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_policy_table
from sim2real_lab.errors import ConfigurationError
from sim2real_lab.instances import make_random_lowrank
from sim2real_lab.policies import QFunction, stochastic
from sim2real_lab.theory import (
    bellman_residuals,
    check_q_gap,
    check_simulation_lemma,
    check_suboptimality_decomposition,
    check_visitation_gap,
    k_star_value,
    max_path_reward,
    theory_diagnostics,
    xi_value,
)


def test_no_gap_and_no_regression_error_gives_depth_one():
    rep = theory_diagnostics(d=4, H=10, A=2, eps_sim=0.0, lambda_bar=0.25, gamma=math.inf, kappa=0.3)
    assert rep.xi == 0.0 and rep.k_star == 1 and rep.k_star_defined


def test_xi_shrinks_with_gamma():
    assert xi_value(2, 0.25, 4, 1e12, 10, 0.0) == pytest.approx(2 * math.sqrt(8 * 4e-12))


def test_lock_regime_satisfies_the_condition():
    H = 12
    rep = theory_diagnostics(d=4, H=H, A=2, eps_sim=1 / (8192 * H), lambda_bar=0.25)
    assert rep.eq2_threshold == 0.25 / (64 * 4 * H * 8)
    assert rep.eq2_condition


def test_large_xi_is_flagged_not_raised():
    rep = theory_diagnostics(d=4, H=10, A=2, eps_sim=0.01, lambda_bar=1 / 8, gamma=32)
    assert rep.xi == 2 * math.sqrt(3.6)
    assert rep.k_star is None and not rep.k_star_defined
    assert any("undefined" in line for line in rep.lines())


def test_bounds_and_sample_size():
    rep = theory_diagnostics(d=2, H=3, A=2, eps_sim=0.1, lambda_bar=0.5, epsilon=0.5, delta=0.1, R=2.0)
    assert rep.simulation_lemma_bound == pytest.approx(1.8)
    assert rep.q_gap_bound == pytest.approx(0.6)
    assert rep.visitation_bound == pytest.approx(0.3)
    assert rep.sample_bound == pytest.approx(4 * 3**16 / 0.5**8 * math.log(30))
    assert "constants-suppressed" in rep.sample_bound_label


@given(st.floats(1e-6, 0.999), st.floats(1e-6, 0.999))
def test_k_star_is_the_smallest_sufficient_depth(xi, kappa):
    k = k_star_value(xi, kappa)
    assert k >= 1
    assert xi**k <= kappa * (1 + 1e-9)
    if k > 1:
        assert xi ** (k - 1) > kappa * (1 - 1e-9)


def test_diagnostics_input_checks():
    with pytest.raises(ConfigurationError):
        theory_diagnostics(d=0, H=1, A=1, eps_sim=0, lambda_bar=1)
    with pytest.raises(ConfigurationError):
        k_star_value(0.5, 1.0)


def test_max_path_reward():
    r = np.zeros((3, 2, 2))
    r[0, 0, 1] = 0.5
    r[2, 1, 0] = 1.0
    assert max_path_reward(r) == 1.5


@given(st.integers(0, 5000), st.floats(0, 0.3))
def test_exact_bounds_hold(seed, eps):
    b = make_random_lowrank(4, 3, 5, 3, eps, seed)
    rng = np.random.default_rng(seed)
    pol = stochastic(random_policy_table(rng, 5, 4, 3))
    assert check_simulation_lemma(b.sim, b.real).passed
    assert check_q_gap(b.sim, b.real, pol).passed
    masks = [rng.random((4, 3)) < 0.5 for _ in range(10)]
    assert check_visitation_gap(b.sim, b.real, pol, masks).passed
    f = QFunction(rng.random((5, 4, 3)))
    assert check_suboptimality_decomposition(b.real, f).passed


def test_zero_gap_has_zero_margin():
    b = make_random_lowrank(4, 3, 5, 3, 0.0, 1)
    chk = check_simulation_lemma(b.sim, b.real)
    assert chk.observed == 0.0 and chk.bound == 0.0 and chk.margin == 0.0


def test_bellman_residuals_vanish_at_q_star():
    from sim2real_lab.mdp import optimal_policy_vi

    b = make_random_lowrank(3, 2, 4, 2, 0.0, 2)
    q = optimal_policy_vi(b.real).q
    assert np.allclose(bellman_residuals(b.real, q), 0.0, atol=1e-12)
    assert check_suboptimality_decomposition(b.real, q).observed == pytest.approx(0.0, abs=1e-12)
