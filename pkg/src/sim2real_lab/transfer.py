"""End-to-end transfer procedures on a (sim, real) pair.

* ``zeta_greedy_protocol``: learn from scratch in real with zeta-greedy FQI.
* ``direct_transfer_protocol``: play the sim-optimal policy with zeta noise, fit FQI.
* ``exploration_transfer``: design exploration policies in sim, explore real
  with them, fit FQI, then pick between the FQI policy and the sim-optimal
  policy by Monte Carlo.
* ``explore_real`` / ``sim2explore``: the sim-constrained doubling variant.
* ``meta_transfer``: pluggable exploration learner and policy optimizer.

Real and simulator usage are counted separately in every ``RunRecord``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .design import cover_traj, cover_traj_policy, learn_exp_policies
from .errors import ConfigurationError
from .mdp import TabularMDP, optimal_policy_vi, policy_value_exact, rollout_batch, trajectory_from_draws
from .policies import MarkovPolicy, MixturePolicy, Policy, uniform_mixture, zeta_greedy
from .regression import (
    FQILearner,
    SufficientStats,
    TransitionDataset,
    constrained_fqi,
    effective_log_cardinality,
    fqi_from_stats,
    greedy_policy,
    seed_buffer,
)
from .rng import EpisodeStream


@dataclass(frozen=True)
class Probe:
    episode: int
    real_steps: int
    sim_episodes: int
    exact_suboptimality: float
    mc_value_estimate: float  # mean real return of the episodes since the previous probe


@dataclass(eq=False)
class RunRecord:
    algorithm: str
    seed: int
    trial: int = 0
    returns: np.ndarray = None  # per real episode
    behavior: np.ndarray = None  # per real episode, index into behavior_names
    behavior_names: tuple = ()
    probes: list = field(default_factory=list)
    final_policy: Policy | None = None
    final_suboptimality: float = math.nan
    sim_episodes: int = 0
    config: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def real_episodes(self) -> int:
        return 0 if self.returns is None else len(self.returns)

    @property
    def cumulative_real_steps(self) -> np.ndarray:
        H = self.config.get("H", 1)
        return H * np.arange(1, self.real_episodes + 1)


class _Recorder:
    """Collects per-episode returns and exact-suboptimality probes."""

    def __init__(self, real: TabularMDP, eval_stride: int, T: int):
        if eval_stride < 1:
            raise ConfigurationError("eval_stride must be >= 1")
        self.real = real
        self.v_star = optimal_policy_vi(real).v0
        self.stride = eval_stride
        self.T = T
        self.returns: list[float] = []
        self.behavior: list[int] = []
        self.names: list[str] = []
        self.probes: list[Probe] = []
        self.sim_episodes = 0
        self._last_probe = 0

    def subopt(self, policy: Policy) -> float:
        gap = self.v_star - policy_value_exact(self.real, policy).v0
        return float(min(max(gap, 0.0), self.real.horizon))

    def _code(self, name: str) -> int:
        if name not in self.names:
            self.names.append(name)
        return self.names.index(name)

    def due(self) -> bool:
        n = len(self.returns)
        return n % self.stride == 0 and n > self._last_probe

    def add(self, ret: float, name: str) -> None:
        self.returns.append(float(ret))
        self.behavior.append(self._code(name))

    def add_many(self, rets: np.ndarray, name: str, candidate: Callable[[int], Policy]) -> None:
        """Log a block of episodes, probing ``candidate(n_seen)`` at every stride boundary."""
        code = self._code(name)
        for r in np.asarray(rets, dtype=float):
            self.returns.append(float(r))
            self.behavior.append(code)
            if self.due():
                self.probe(candidate(len(self.returns)))

    def probe(self, policy: Policy) -> None:
        n = len(self.returns)
        window = self.returns[self._last_probe:n]
        mc = float(np.mean(window)) if window else math.nan
        self.probes.append(Probe(n, n * self.real.horizon, self.sim_episodes, self.subopt(policy), mc))
        self._last_probe = n

    def finish(self, algorithm: str, seed: int, trial: int, final: Policy, config: dict, extras=None) -> RunRecord:
        n = len(self.returns)
        if n > self.T:
            raise AssertionError(f"{algorithm} used {n} real episodes, above the budget {self.T}")
        # the final row always reports the returned policy
        if self.probes and self.probes[-1].episode == n:
            last = self.probes[-1]
            self.probes[-1] = Probe(n, last.real_steps, self.sim_episodes, self.subopt(final), last.mc_value_estimate)
        else:
            self.probe(final)
        cfg = {"H": self.real.horizon, **config}
        return RunRecord(
            algorithm, int(seed), int(trial), np.array(self.returns), np.array(self.behavior, dtype=int),
            tuple(self.names), list(self.probes), final, self.subopt(final), self.sim_episodes, cfg, extras or {},
        )


def play(mdp: TabularMDP, policy: Policy, seed: int, purpose: str, trial: int, start: int, count: int):
    """``count`` episodes of a fixed policy; episode ``start + i`` has its own stream."""
    picks, u = EpisodeStream(seed, purpose, trial).block(start, count, mdp.horizon)
    return rollout_batch(mdp, policy, picks, u)


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    half_width: float
    n: int
    delta: float


def hoeffding_half_width(H: float, n: int, delta: float) -> float:
    return H * math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def monte_carlo_value(real: TabularMDP, policy: Policy, n: int, seed: int, delta: float = 0.05,
                      trial: int = 0, purpose: str = "monte-carlo") -> MCEstimate:
    """Mean of ``n`` seeded returns with the Hoeffding half-width ``H sqrt(log(2/delta)/(2n))``."""
    if n < 1:
        raise ConfigurationError("Monte Carlo evaluation needs n >= 1")
    batch = play(real, policy, seed, purpose, trial, 0, n)
    return MCEstimate(float(batch.returns.mean()), hoeffding_half_width(real.horizon, n, delta), n, delta)


def _greedy_cdf(q_values: np.ndarray, zeta: float) -> np.ndarray:
    H, S, A = q_values.shape
    probs = np.full((H, S, A), zeta / A)
    np.put_along_axis(probs, np.argmax(q_values, axis=-1)[..., None], 1 - zeta + zeta / A, axis=-1)
    return np.cumsum(probs, axis=-1)


def _episode(mdp: TabularMDP, pol_cdf: np.ndarray, u: np.ndarray):
    """One episode from pre-drawn uniforms; same inverse-cdf rule as ``rollout_batch``."""
    A, S = mdp.num_actions, mdp.num_states
    s = mdp.init_state
    steps = []
    tcdf = mdp.transition_cdf
    rew = mdp.rewards
    for k, (ua, us) in enumerate(u.tolist()):
        a = min(int((ua >= pol_cdf[k, s]).sum()), A - 1)
        s2 = min(int((us >= tcdf[k, s, a]).sum()), S - 1)
        steps.append((k + 1, s, a, float(rew[k, s, a]), s2))
        s = s2
    return steps


def zeta_greedy_protocol(real: TabularMDP, zeta: float, T: int, seed: int, refit_period: int = 1,
                         buffer_init: str = "none", default_value: float = 0.0, eval_stride: int = 50,
                         trial: int = 0) -> RunRecord:
    """Each episode plays ``greedy(f^t)`` w.p. ``1 - zeta`` per step, else a uniform action."""
    if not 0 <= zeta <= 1:
        raise ConfigurationError(f"zeta must lie in [0, 1], got {zeta}")
    H, S, A = real.horizon, real.num_states, real.num_actions
    rec = _Recorder(real, eval_stride, T)
    learner = FQILearner(H, S, A, default_value, refit_period=refit_period)
    learner.seed(seed_buffer(real, buffer_init, seed))
    stream = EpisodeStream(seed, "zeta-greedy", trial)
    cdf = _greedy_cdf(learner.q.values, zeta)
    for t in range(T):
        _, u = stream.draws(t, H)
        steps = _episode(real, cdf, u)
        before = learner.q
        learner.observe(steps)
        if learner.q is not before:
            cdf = _greedy_cdf(learner.q.values, zeta)
        rec.add(sum(st[3] for st in steps), "zeta-greedy")
        if rec.due():
            rec.probe(learner.policy())
    config = {"algorithm": "zeta_greedy", "zeta": zeta, "T": T, "refit_period": refit_period,
              "buffer_init": buffer_init, "default_value": default_value}
    return rec.finish("zeta_greedy", seed, trial, learner.policy(), config)


def _fit_prefix(stats_builder, default_value):
    cache = {}

    def candidate(n):
        if n not in cache:
            cache.clear()
            cache[n] = greedy_policy(fqi_from_stats(stats_builder(n), default_value))
        return cache[n]

    return candidate


class _PrefixStats:
    """Sufficient statistics of the first ``n`` episodes of a batch, built incrementally."""

    def __init__(self, batch, shape, base: SufficientStats | None = None):
        self.batch = batch
        self.stats = base.copy() if base is not None else SufficientStats.zeros(*shape)
        self.n = 0

    def __call__(self, n: int) -> SufficientStats:
        if n < self.n:
            raise ValueError("prefix statistics only grow")
        if n > self.n:
            b = self.batch
            H = b.states.shape[1]
            sl = slice(self.n, n)
            hh = np.broadcast_to(np.arange(1, H + 1), (n - self.n, H))
            self.stats.add(TransitionDataset(hh, b.states[sl], b.actions[sl], b.rewards[sl], b.next_states[sl]))
            self.n = n
        return self.stats


def direct_transfer_protocol(sim: TabularMDP, real: TabularMDP, zeta: float, T: int, seed: int,
                             default_value: float = 0.0, eval_stride: int = 50, trial: int = 0) -> RunRecord:
    """Play ``ZetaGreedy(pi_sim*, zeta)`` in real for ``T`` episodes, then ``greedy(fqi)``."""
    if sim.transitions.shape != real.transitions.shape:
        raise ConfigurationError("sim and real must share S, A, H")
    rec = _Recorder(real, eval_stride, T)
    pi_sim = optimal_policy_vi(sim).policy
    behavior = zeta_greedy(pi_sim, zeta)
    batch = play(real, behavior, seed, "direct-transfer", trial, 0, T)
    prefix = _PrefixStats(batch, (real.horizon, real.num_states, real.num_actions))
    cand = _fit_prefix(prefix, default_value)
    rec.add_many(batch.returns, "zeta-greedy(pi_sim*)", cand)
    final = greedy_policy(fqi_from_stats(prefix(T), default_value))
    config = {"algorithm": "direct_transfer", "zeta": zeta, "T": T, "default_value": default_value}
    return rec.finish("direct_transfer", seed, trial, final, config)


def design_zeta(A: int, H: int, epsilon: float) -> tuple[float, bool]:
    """``4 A^3 epsilon / H`` clamped to ``[1e-6, 1]``; also reports whether the clamp fired."""
    raw = 4 * A**3 * epsilon / H
    z = min(max(raw, 1e-6), 1.0)
    return z, z != raw


def exploration_policies(sim: TabularMDP, zeta: float, delta: float = 0.1, mode: str = "practical",
                         **design_kwargs) -> tuple[Policy, list, list]:
    """Per-step designs and the uniform mixture over steps of their randomized-after versions.

    Design warnings (unreachable feature coordinates) are returned as strings
    rather than emitted, so callers can stamp them into their records.
    """
    import warnings

    designs = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        for h in range(1, sim.horizon + 1):
            designs.append(learn_exp_policies(sim, h, zeta=zeta, delta=delta, mode=mode, **design_kwargs))
    pi_exp = uniform_mixture([d.randomized() for d in designs], "pi_exp")
    return pi_exp, designs, [str(w.message) for w in caught]


def exploration_transfer(sim: TabularMDP, real: TabularMDP, epsilon: float, delta: float, T: int, seed: int,
                         zeta: float | None = None, mode: str = "practical", default_value: float = 0.0,
                         eval_stride: int = 50, trial: int = 0, **design_kwargs) -> RunRecord:
    """Explore real with sim-designed policies, fit FQI, then select by Monte Carlo.

    Real budget: ``floor(T/2)`` exploration episodes plus ``floor(T/4)``
    evaluation episodes for each of the two candidates. Equal estimates
    select the FQI policy.
    """
    if T < 8:
        raise ConfigurationError(f"exploration transfer needs T >= 8, got {T}")
    if sim.factorization is None:
        raise ConfigurationError("exploration transfer needs a factorized simulator")
    H, S, A = real.horizon, real.num_states, real.num_actions
    clamped = False
    if zeta is None:
        zeta, clamped = design_zeta(A, H, epsilon)
    rec = _Recorder(real, eval_stride, T)
    pi_exp, designs, design_warnings = exploration_policies(sim, zeta, delta, mode, **design_kwargs)
    n_explore, n_eval = T // 2, T // 4
    batch = play(real, pi_exp, seed, "explore", trial, 0, n_explore)
    prefix = _PrefixStats(batch, (H, S, A))
    cand = _fit_prefix(prefix, default_value)
    rec.add_many(batch.returns, "pi_exp", cand)
    pi_f = greedy_policy(fqi_from_stats(prefix(n_explore), default_value))
    pi_sim = optimal_policy_vi(sim).policy
    ev_f = play(real, pi_f, seed, "evaluate-fqi", trial, 0, n_eval)
    rec.add_many(ev_f.returns, "eval:pi_f", lambda n: pi_f)
    ev_s = play(real, pi_sim, seed, "evaluate-sim", trial, 0, n_eval)
    rec.add_many(ev_s.returns, "eval:pi_sim*", lambda n: pi_f)
    est_f, est_s = float(ev_f.returns.mean()), float(ev_s.returns.mean())
    final = pi_f if est_f >= est_s else pi_sim
    config = {"algorithm": "exploration_transfer", "epsilon": epsilon, "delta": delta, "T": T, "zeta": zeta,
              "zeta_clamped": clamped, "mode": mode, "default_value": default_value}
    extras = {
        "estimates": {"pi_f": est_f, "pi_sim*": est_s},
        "selected": "pi_f" if final is pi_f else "pi_sim*",
        "design_min_eig": [d.min_eig for d in designs],
        "design_rounds": [d.rounds for d in designs],
        "oracle_calls": int(sum(d.rounds for d in designs)),
        "design_warnings": design_warnings,
    }
    return rec.finish("exploration_transfer", seed, trial, final, config, extras)


def explore_real(real: TabularMDP, exp_policies, T: int, sim_data: TransitionDataset, gamma: float, seed: int,
                 trial: int = 0, purpose: str = "explore-real", default_value: float = 0.0):
    """Explore with the uniform mixture of ``exp_policies``, then sim-constrained FQI.

    Returns ``(greedy policy, ConstrainedFitReport, RolloutBatch)``.
    """
    pols = exp_policies if isinstance(exp_policies, (list, tuple)) else [exp_policies]
    mix = uniform_mixture(list(pols), "explore-real")
    batch = play(real, mix, seed, purpose, trial, 0, T)
    data = TransitionDataset.from_batch(batch)
    H, S, A = real.horizon, real.num_states, real.num_actions
    report = constrained_fqi(data, sim_data, gamma, H, S, A, default_value)
    return greedy_policy(report.f_hat), report, batch


@dataclass(frozen=True)
class Sim2ExploreSchedule:
    iota: int
    T_round: int
    eps_bar: tuple
    gammas: tuple
    betas: tuple
    log_f: float
    delta: float
    v_max: float

    @classmethod
    def build(cls, T: int, delta: float, epsilon: float, H: int, A: int, d: int, log_f: float,
              v_max: float | None = None, iota: int | None = None) -> "Sim2ExploreSchedule":
        vmax = float(H) if v_max is None else float(v_max)
        if iota is None:
            iota = max(1, math.ceil(math.log2(vmax * A * d * H / epsilon)))
        T_round = T // (2 * iota)
        if T_round < 4:
            raise ConfigurationError(f"schedule infeasible: T/(2*iota) = {T_round} < 4 (T={T}, iota={iota})")
        eps_bar = tuple(2.0**-l for l in range(1, iota + 1))
        gammas = tuple(10 * vmax**2 * e**2 for e in eps_bar)
        log_term = math.log(8 * H / delta) + log_f
        betas = tuple(g / (20 * vmax**2 * log_term) for g in gammas)
        return cls(iota, T_round, eps_bar, gammas, betas, float(log_f), float(delta), vmax)


def sim2explore(sim: TabularMDP, real: TabularMDP, T: int, delta: float, epsilon: float, seed: int,
                log_f: float | None = None, iota: int | None = None, zeta: float | None = None,
                cover_max_episodes: int = 2_000_000, eval_stride: int = 50, trial: int = 0,
                default_value: float = 0.0) -> RunRecord:
    """Rounds of halving target accuracy: CoverTraj sim data, constrained exploration, evaluation.

    Each round's real budget ``T_round = floor(T / (2 iota))`` is split into
    ``ceil(T_round/2)`` exploration and ``floor(T_round/2)`` evaluation episodes.
    The returned policy is the round with the highest estimate (earliest on ties).
    """
    if sim.factorization is None:
        raise ConfigurationError("sim2explore needs a factorized simulator")
    H, S, A = real.horizon, real.num_states, real.num_actions
    d = sim.factorization.dim
    if log_f is None:
        log_f = effective_log_cardinality(S, A, H)
    sched = Sim2ExploreSchedule.build(T, delta, epsilon, H, A, d, log_f, iota=iota)
    if zeta is None:
        zeta, _ = design_zeta(A, H, epsilon)
    pi_exp, _, _ = exploration_policies(sim, zeta, delta)
    rec = _Recorder(real, eval_stride, T)
    n_eval = sched.T_round // 2
    n_explore = sched.T_round - n_eval
    candidates, estimates, round_subopt = [], [], []
    for l, (gamma, beta) in enumerate(zip(sched.gammas, sched.betas), start=1):
        sim_data = TransitionDataset.empty()
        for h in range(1, H + 1):
            out = cover_traj(sim, h, beta, seed=seed * 1000 + l, max_episodes=cover_max_episodes)
            sim_data = sim_data.concat(out.data)
            rec.sim_episodes += out.total_episodes
        pol, report, batch = explore_real(real, pi_exp, n_explore, sim_data, gamma, seed, trial,
                                          f"explore-real-{l}", default_value)
        rec.add_many(batch.returns, f"round{l}:explore", lambda n, p=pol: p)
        ev = play(real, pol, seed, f"evaluate-round-{l}", trial, 0, n_eval)
        rec.add_many(ev.returns, f"round{l}:eval", lambda n, p=pol: p)
        candidates.append(pol)
        estimates.append(float(ev.returns.mean()))
        round_subopt.append(rec.subopt(pol))
    best = int(np.argmax(estimates))
    config = {"algorithm": "sim2explore", "T": T, "delta": delta, "epsilon": epsilon, "iota": sched.iota,
              "log_f": sched.log_f, "log_f_is_effective_stand_in": True, "T_round": sched.T_round,
              "explore_per_round": n_explore, "evaluate_per_round": n_eval}
    extras = {"estimates": estimates, "round_suboptimality": round_subopt, "selected_round": best + 1,
              "gammas": list(sched.gammas), "betas": list(sched.betas)}
    return rec.finish("sim2explore", seed, trial, candidates[best], config, extras)


# ---------------------------------------------------------------------------
# Generic meta-algorithm


class DesignExplorer:
    """Exploration learner: per-step min-eigenvalue design, randomized after the target step."""

    name = "design"

    def __init__(self, zeta: float = 1e-2, delta: float = 0.1, mode: str = "practical"):
        self.zeta, self.delta, self.mode = zeta, delta, mode

    def __call__(self, sim: TabularMDP, T_sim: int, seed: int):
        pi_exp, _, _ = exploration_policies(sim, self.zeta, self.delta, self.mode)
        return list(pi_exp.components), 0


class CoverTrajExplorer:
    """Exploration learner: CoverTraj collection policies for every step."""

    name = "cover_traj"

    def __init__(self, beta: float = 0.5):
        self.beta = beta

    def __call__(self, sim: TabularMDP, T_sim: int, seed: int):
        pols, used = [], 0
        for h in range(1, sim.horizon + 1):
            out = cover_traj(sim, h, self.beta, seed=seed, max_episodes=T_sim)
            used += out.total_episodes
            pols.extend(cover_traj_policy(sim, out, i) for i in range(len(out.policies)))
        return pols, used


class FQIOptimizer:
    """Policy optimizer: batch FQI on the whole buffer, refit on ``step``."""

    name = "fqi"
    plays = False

    def __init__(self, H: int, S: int, A: int, default_value: float = 0.0, refit_period: int = 1):
        self.learner = FQILearner(H, S, A, default_value, refit_period=refit_period)

    def observe(self, steps) -> None:
        self.learner.observe(steps)

    def step(self, real, u) -> list | None:
        return None

    def policy(self) -> MarkovPolicy:
        return self.learner.policy()


class ZetaGreedyOptimizer(FQIOptimizer):
    """Policy optimizer that also plays one zeta-greedy real episode per step."""

    name = "zeta_greedy"
    plays = True

    def __init__(self, H: int, S: int, A: int, zeta: float = 0.1, default_value: float = 0.0,
                 refit_period: int = 1):
        super().__init__(H, S, A, default_value, refit_period)
        self.zeta = zeta

    def step(self, real, u):
        steps = _episode(real, _greedy_cdf(self.learner.q.values, self.zeta), u)
        self.learner.observe(steps)
        return steps


def meta_transfer(sim: TabularMDP, real: TabularMDP, A_exp, A_po, T_sim: int, T: int, seed: int,
                  eval_stride: int = 50, trial: int = 0) -> RunRecord:
    """Learn exploration policies in sim, then alternate real exploration and optimizer steps.

    ``A_exp(sim, T_sim, seed) -> (policies, sim_episodes_used)``. ``A_po`` has
    ``observe(steps)``, ``step(real, uniforms)`` (returning the steps of a real
    episode it played itself, or ``None``) and ``policy()``.
    """
    if not callable(A_exp):
        raise ConfigurationError("A_exp must be callable as A_exp(sim, T_sim, seed)")
    for attr in ("observe", "step", "policy"):
        if not callable(getattr(A_po, attr, None)):
            raise ConfigurationError(f"A_po lacks a callable {attr}()")
    result = A_exp(sim, T_sim, seed)
    if not isinstance(result, tuple) or len(result) != 2:
        raise ConfigurationError("A_exp must return (policies, sim_episodes_used)")
    policies, used = result
    policies = list(policies)
    if not policies or not all(isinstance(p, (MarkovPolicy, MixturePolicy)) for p in policies):
        raise ConfigurationError("A_exp returned no usable policies")
    if used > T_sim:
        raise ConfigurationError(f"A_exp used {used} sim episodes, above T_sim={T_sim}")
    rec = _Recorder(real, eval_stride, T)
    rec.sim_episodes = int(used)
    mix = uniform_mixture(policies, "meta-exp")
    rounds = T // 2
    explore = EpisodeStream(seed, "meta-explore", trial)
    online = EpisodeStream(seed, "meta-optimizer", trial)
    for t in range(rounds):
        pick, u = explore.draws(t, real.horizon)
        traj = trajectory_from_draws(real, mix, pick, u)
        A_po.observe(traj.steps)
        rec.add(traj.total_return, "pi_exp")
        if rec.due():
            rec.probe(A_po.policy())
        _, u2 = online.draws(t, real.horizon)
        steps = A_po.step(real, u2)
        if steps is not None:
            rec.add(sum(st[3] for st in steps), f"A_po:{getattr(A_po, 'name', 'optimizer')}")
            if rec.due():
                rec.probe(A_po.policy())
    config = {"algorithm": "meta_transfer", "T": T, "T_sim": T_sim,
              "A_exp": getattr(A_exp, "name", type(A_exp).__name__),
              "A_po": getattr(A_po, "name", type(A_po).__name__)}
    return rec.finish("meta_transfer", seed, trial, A_po.policy(), config)
