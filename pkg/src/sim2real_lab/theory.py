"""Closed-form diagnostics and exact checks of the transfer bounds.

Every check compares two exactly computed quantities (dynamic programming on
both sides) and reports the margin ``bound - observed``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError
from .mdp import (
    TabularMDP,
    bellman_apply,
    occupancy_measures,
    optimal_policy_vi,
    policy_value_exact,
    q_values_exact,
    tv_gap,
)
from .policies import MarkovPolicy, QFunction, greedy_of_q


@dataclass(frozen=True)
class TheoryReport:
    simulation_lemma_bound: float
    q_gap_bound: float
    visitation_bound: float
    xi: float
    k_star: int | None
    k_star_defined: bool
    eq2_threshold: float
    eq2_condition: bool
    sample_bound: float
    sample_bound_label: str = "constants-suppressed (c = 1)"

    def as_dict(self) -> dict:
        return asdict(self)

    def lines(self) -> list[str]:
        k = str(self.k_star) if self.k_star_defined else f"undefined (xi = {self.xi:.6g} >= 1)"
        return [
            f"simulation-lemma bound 2H^2 eps_sim      = {self.simulation_lemma_bound:.17g}",
            f"Q-gap bound H R eps_sim                  = {self.q_gap_bound:.17g}",
            f"visitation bound H eps_sim               = {self.visitation_bound:.17g}",
            f"xi                                       = {self.xi:.17g}",
            f"k*                                       = {k}",
            f"eps_sim <= lambda*/(64 d H A^3) ({self.eq2_threshold:.6g}) : {self.eq2_condition}",
            f"sample bound d^2 H^16 / eps^8 log(H|F|/delta) = {self.sample_bound:.6g} [{self.sample_bound_label}]",
        ]


def xi_value(A: int, lambda_bar: float, d: int, gamma: float, H: int, eps_sim: float) -> float:
    """``2 sqrt((A / lambda_bar) (d / gamma + H eps_sim))``; ``gamma = inf`` drops the ``d/gamma`` term."""
    inner = (0.0 if math.isinf(gamma) else d / gamma) + H * eps_sim
    return 2.0 * math.sqrt(A / lambda_bar * inner)


def k_star_value(xi: float, kappa: float) -> int | None:
    """``ceil(log(1/kappa) / log(1/xi))`` for ``xi < 1``; 1 at ``xi = 0``; ``None`` when ``xi >= 1``."""
    if not 0 < kappa < 1:
        raise ConfigurationError(f"kappa must lie in (0, 1), got {kappa}")
    if xi >= 1:
        return None
    if xi == 0:
        return 1
    return max(1, math.ceil(math.log(1 / kappa) / math.log(1 / xi)))


def theory_diagnostics(d: int, H: int, A: int, eps_sim: float, lambda_bar: float, gamma: float = math.inf,
                       kappa: float = 0.1, epsilon: float = 0.1, delta: float = 0.1, R: float | None = None,
                       log_f: float = 0.0) -> TheoryReport:
    """Bounds and schedule quantities from problem constants.

    ``R`` defaults to ``H`` (rewards in ``[0, 1]``). ``log_f`` is ``log |F|``
    for the sample bound.
    """
    for name, val in (("d", d), ("H", H), ("A", A), ("lambda_bar", lambda_bar), ("gamma", gamma),
                      ("epsilon", epsilon), ("delta", delta)):
        if not val > 0:
            raise ConfigurationError(f"{name} must be positive, got {val}")
    if eps_sim < 0:
        raise ConfigurationError(f"eps_sim must be >= 0, got {eps_sim}")
    R = float(H) if R is None else float(R)
    xi = xi_value(A, lambda_bar, d, gamma, H, eps_sim)
    k = k_star_value(xi, kappa)
    threshold = lambda_bar / (64 * d * H * A**3)
    cond = eps_sim <= threshold * (1 + 1e-12)
    sample = d**2 * H**16 / epsilon**8 * (math.log(H / delta) + log_f)
    return TheoryReport(2 * H**2 * eps_sim, H * R * eps_sim, H * eps_sim, xi, k, k is not None,
                        threshold, cond, sample)


# ---------------------------------------------------------------------------
# Exact checks on MDP pairs


@dataclass(frozen=True)
class BoundCheck:
    name: str
    observed: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.observed

    @property
    def passed(self) -> bool:
        return self.observed <= self.bound + 1e-12


def max_path_reward(rewards: np.ndarray) -> float:
    """Smallest ``R`` with ``sum_h r_h(s_h, a_h) <= R`` for every sequence."""
    return float(np.asarray(rewards).max(axis=(1, 2)).sum())


def check_simulation_lemma(sim: TabularMDP, real: TabularMDP) -> BoundCheck:
    eps, _ = tv_gap(sim, real)
    pi_sim = optimal_policy_vi(sim).policy
    gap = optimal_policy_vi(real).v0 - policy_value_exact(real, pi_sim).v0
    return BoundCheck("simulation-lemma", gap, 2 * real.horizon**2 * eps)


def check_q_gap(sim: TabularMDP, real: TabularMDP, policy: MarkovPolicy, reward=None) -> BoundCheck:
    eps, _ = tv_gap(sim, real)
    r = real.rewards if reward is None else np.asarray(reward, dtype=float)
    qa = q_values_exact(sim, policy, r).values
    qb = q_values_exact(real, policy, r).values
    return BoundCheck("q-gap", float(np.abs(qa - qb).max()), real.horizon * max_path_reward(r) * eps)


def check_visitation_gap(sim: TabularMDP, real: TabularMDP, policy, subsets) -> BoundCheck:
    """``max_{h, Z} |w_h^sim(Z) - w_h^real(Z)|`` over boolean masks ``subsets[j][s, a]``."""
    eps, _ = tv_gap(sim, real)
    wa = occupancy_measures(sim, policy).values
    wb = occupancy_measures(real, policy).values
    diff = wa - wb
    worst = 0.0
    for mask in subsets:
        worst = max(worst, float(np.abs((diff * np.asarray(mask, dtype=float)).sum(axis=(1, 2))).max()))
    return BoundCheck("visitation-gap", worst, real.horizon * eps)


def bellman_residuals(mdp: TabularMDP, f: QFunction) -> np.ndarray:
    """``f_h - T f_{h+1}`` for every step, with ``f_{H+1} = 0``."""
    H = mdp.horizon
    out = np.empty_like(f.values)
    for k in range(H):
        nxt = f.values[k + 1] if k + 1 < H else None
        out[k] = f.values[k] - bellman_apply(mdp, nxt, k + 1)
    return out


def check_suboptimality_decomposition(mdp: TabularMDP, f: QFunction) -> BoundCheck:
    """``V* - V^{pi^f} <= max_{pi in {pi^f, pi*}} sum_h 2 |E^pi[f_h - T f_{h+1}]|``."""
    pi_f = greedy_of_q(f)
    opt = optimal_policy_vi(mdp)
    lhs = opt.v0 - policy_value_exact(mdp, pi_f).v0
    res = bellman_residuals(mdp, f)
    rhs = 0.0
    for pi in (pi_f, opt.policy):
        w = occupancy_measures(mdp, pi).values
        rhs = max(rhs, float(2 * np.abs((w * res).sum(axis=(1, 2))).sum()))
    return BoundCheck("suboptimality-decomposition", lhs, rhs)
