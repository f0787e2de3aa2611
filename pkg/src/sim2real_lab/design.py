"""Simulator-side exploration design and reward-free data collection.

* ``learn_exp_policies``: Frank-Wolfe design on ``tr((Lambda + zeta I)^-1)``
  where each linear step is an exact policy optimization in the simulator.
* ``cover_traj``: staged reward-free collection that partitions the feature
  space by reachability.
* ``lambda_star``: the exact best step-``h`` minimum eigenvalue over all
  policies, as one SDP over the occupancy flow polytope.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ConfigurationError
from .mdp import (
    TabularMDP,
    _markov_occupancy,
    covariance_from_occupancy,
    enumerate_deterministic_policies,
    feature_covariance,
    min_eig,
    occupancy_measures,
    value_iteration,
)
from .policies import MarkovPolicy, Policy, deterministic, randomize_after, uniform_mixture
from .regression import TransitionDataset
from .rng import episode_generator

FAITHFUL_CONSTANT = 12544


def _require_features(sim: TabularMDP):
    if sim.factorization is None:
        raise ConfigurationError("this operation needs an MDP with a factorization")
    return sim.factorization.phi


def _check_step(sim: TabularMDP, h: int):
    if not 1 <= h <= sim.horizon:
        raise ConfigurationError(f"step {h} outside 1..{sim.horizon}")


def step_reward(sim: TabularMDP, h: int, r_h: np.ndarray) -> np.ndarray:
    """Reward tensor that is ``r_h`` at step ``h`` and zero elsewhere."""
    r = np.zeros((sim.horizon, sim.num_states, sim.num_actions))
    r[h - 1] = r_h
    return r


def max_visit_probability(sim: TabularMDP, h: int, pairs) -> float:
    """Exact ``sup_pi w_h^pi(pairs)`` via value iteration on the indicator reward."""
    _check_step(sim, h)
    ind = np.zeros((sim.num_states, sim.num_actions))
    for s, a in pairs:
        ind[s, a] = 1.0
    Q, _ = value_iteration(sim.transitions, step_reward(sim, h, ind))
    return float(Q[0, sim.init_state].max())


def uncovered_mass(sim: TabularMDP, h: int, covered) -> float:
    """Exact ``sup_pi`` probability of visiting a pair outside ``covered`` at step ``h``."""
    covered = {tuple(p) for p in covered}
    rest = [(s, a) for s in range(sim.num_states) for a in range(sim.num_actions) if (s, a) not in covered]
    return max_visit_probability(sim, h, rest)


def dead_coordinates(sim: TabularMDP, h: int, tol: float = 1e-12) -> list[int]:
    """Feature coordinates ``k`` with ``sup_pi E[phi_k^2] = 0`` at step ``h``."""
    phi = _require_features(sim)
    dead = []
    for k in range(phi.shape[2]):
        Q, _ = value_iteration(sim.transitions, step_reward(sim, h, phi[:, :, k] ** 2))
        if Q[0, sim.init_state].max() <= tol:
            dead.append(k)
    return dead


# ---------------------------------------------------------------------------
# Exact reachability (best achievable minimum eigenvalue)


def lambda_star(sim: TabularMDP, h: int) -> float:
    """``max_pi lambda_min(E^pi[phi phi^T])`` at step ``h``, solved as an SDP.

    Occupancies of all (mixtures of) policies form the flow polytope
    ``sum_a w_1(s,a) = 1{s=s_1}``, ``sum_a w_{k+1}(s',a) = sum_{s,a} P_k(s'|s,a) w_k(s,a)``,
    so the optimum over policies is a single convex program.
    """
    import cvxpy as cp

    phi = _require_features(sim)
    _check_step(sim, h)
    S, A, d = phi.shape
    P = sim.transitions
    w = [cp.Variable((S, A), nonneg=True) for _ in range(h)]
    start = np.zeros(S)
    start[sim.init_state] = 1.0
    cons = [cp.sum(w[0], axis=1) == start]
    for k in range(h - 1):
        inflow = sum(P[k][:, a, :].T @ w[k][:, a] for a in range(A))
        cons.append(cp.sum(w[k + 1], axis=1) == inflow)
    t = cp.Variable()
    outer = [np.outer(phi[s, a], phi[s, a]) for s in range(S) for a in range(A)]
    flat = cp.reshape(w[h - 1], (S * A,), order="C")
    lam = sum(flat[i] * outer[i] for i in range(S * A))
    lam = 0.5 * (lam + lam.T)
    cons.append(lam - t * np.eye(d) >> 0)
    prob = cp.Problem(cp.Maximize(t), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise ConfigurationError(f"lambda_star SDP ended with status {prob.status}")
    return max(float(t.value), 0.0)


def occupancy_vertices(sim: TabularMDP, h: int, limit: int = 2**16) -> np.ndarray:
    """Distinct step-``h`` covariances of deterministic policies (enumerated)."""
    phi = _require_features(sim)
    S, A = sim.num_states, sim.num_actions
    if A ** (S * h) > limit:
        raise ConfigurationError(f"{A}^{S * h} step-{h} policies exceed the enumeration limit {limit}")
    prefix = TabularMDP(sim.transitions[:h], sim.rewards[:h], sim.init_state)
    seen = {}
    for pol in enumerate_deterministic_policies(prefix, limit):
        w = _markov_occupancy(prefix.transitions, pol.probs, sim.init_state)[h - 1]
        lam = covariance_from_occupancy(phi, w)
        seen.setdefault(np.round(lam, 12).tobytes(), lam)
    return np.array(list(seen.values()))


def lambda_star_bruteforce(sim: TabularMDP, h: int, resolution: int = 64, limit: int = 2**16) -> float:
    """Independent check of :func:`lambda_star` by enumerating deterministic policies.

    With at most three distinct covariance vertices the weights are searched
    on a ``1/resolution`` grid (a certified lower bound); otherwise the convex
    hull of the vertices is searched with an SDP.
    """
    verts = occupancy_vertices(sim, h, limit)
    if len(verts) <= 3:
        best = 0.0
        for i in range(resolution + 1):
            for j in range(resolution + 1 - i):
                wts = [i, j, resolution - i - j][: len(verts)]
                if len(verts) == 1 and i != resolution:
                    continue
                if len(verts) == 2 and i + j != resolution:
                    continue
                lam = sum(wt * v for wt, v in zip(wts, verts)) / resolution
                best = max(best, min_eig(lam))
        return best
    import cvxpy as cp

    wv = cp.Variable(len(verts), nonneg=True)
    t = cp.Variable()
    lam = sum(wv[i] * verts[i] for i in range(len(verts)))
    prob = cp.Problem(cp.Maximize(t), [cp.sum(wv) == 1, 0.5 * (lam + lam.T) - t * np.eye(verts.shape[1]) >> 0])
    prob.solve(solver=cp.CLARABEL)
    return max(float(t.value), 0.0)


# ---------------------------------------------------------------------------
# Frank-Wolfe exploration design


@dataclass(frozen=True, eq=False)
class ExplorationPolicySet:
    """Design output for one step: a uniform mixture over ``policies`` (with repeats)."""

    h: int
    policies: tuple
    weights: np.ndarray
    covariance: np.ndarray
    min_eig: float
    target: float | None
    mode: str
    rounds: int
    stop_reason: str
    zeta: float
    history: np.ndarray = field(repr=False, default=None)

    def mixture(self) -> Policy:
        return uniform_mixture(self.policies, f"exp-h{self.h}")

    def randomized(self) -> Policy:
        """Each policy followed through step ``h``, then uniform actions."""
        return uniform_mixture([randomize_after(p, self.h) for p in self.policies], f"exp-tilde-h{self.h}")


def faithful_checkpoints(limit: int) -> list[int]:
    """``T_j = (N_j + 1) K_j`` with ``N_j = ceil(2^{j/3}) - 1``, ``K_j = ceil(2^{2j/3})``."""
    out, j = [], 1
    while True:
        n_j = math.ceil(2 ** (j / 3)) - 1
        k_j = math.ceil(2 ** (2 * j / 3))
        t = (n_j + 1) * k_j
        if t > limit:
            return sorted(set(out))
        out.append(t)
        j += 1


def learn_exp_policies(sim: TabularMDP, h: int, zeta: float = 1e-2, delta: float = 0.1,
                       mode: str = "practical", max_rounds: int | None = None, patience: int = 5,
                       min_improvement: float = 1e-4, target: float | None = None) -> ExplorationPolicySet:
    """Frank-Wolfe on ``Phi(Lambda) = tr((Lambda + zeta I)^-1)`` at step ``h``.

    Round ``k`` adds the exact best response to the reward
    ``phi^T (Lambda + zeta I)^-2 phi`` with step size ``1/(k+1)``, so the
    iterate is the uniform mixture of the responses so far. The returned set
    is the prefix with the largest minimum eigenvalue.

    ``practical`` stops after ``patience`` rounds without an improvement of
    ``min_improvement``, or once ``(1 - 1e-3) * target`` is met.
    ``faithful`` checks ``lambda_min(T_j Lambda) >= 12544 d log((4 + 64 T_j)/delta)``
    at the doubling checkpoints ``T_j`` and otherwise runs to ``max_rounds``.
    """
    phi = _require_features(sim)
    _check_step(sim, h)
    if zeta <= 0:
        raise ConfigurationError(f"zeta must be positive, got {zeta}")
    if mode not in ("practical", "faithful"):
        raise ConfigurationError(f"mode must be practical or faithful, got {mode!r}")
    if max_rounds is None:
        max_rounds = 500 if mode == "practical" else 4096
    d = phi.shape[2]
    P = sim.transitions
    checkpoints = set(faithful_checkpoints(max_rounds)) if mode == "faithful" else set()
    lam = np.zeros((d, d))
    policies: list[MarkovPolicy] = []
    history = []
    best_val, best_k, since = -1.0, 0, 0
    stop = "max_rounds"
    for k in range(max_rounds):
        reg_inv = np.linalg.inv(lam + zeta * np.eye(d))
        grad = reg_inv @ reg_inv
        r_h = np.einsum("sai,ij,saj->sa", phi, grad, phi)
        _, acts = value_iteration(P[:h], step_reward(sim, h, r_h)[:h])
        full = np.zeros((sim.horizon, sim.num_states), dtype=int)
        full[:h] = acts
        pol = deterministic(full, sim.num_actions, f"design-h{h}-r{k}")
        w_h = _markov_occupancy(P[:h], pol.probs[:h], sim.init_state)[h - 1]
        lam = (k * lam + covariance_from_occupancy(phi, w_h)) / (k + 1)
        policies.append(pol)
        val = min_eig(lam)
        history.append(val)
        if val > best_val + min_improvement:
            since = 0
        else:
            since += 1
        if val > best_val:
            best_val, best_k = val, k + 1
        if mode == "practical":
            if target is not None and best_val >= (1 - 1e-3) * target:
                stop = "target"
                break
            if since >= patience:
                stop = "no_improvement"
                break
        elif (k + 1) in checkpoints:
            t_j = k + 1
            if t_j * val >= FAITHFUL_CONSTANT * d * math.log((4 + 64 * t_j) / delta):
                stop = "faithful_termination"
                break
    chosen = tuple(policies[:best_k])
    mix = uniform_mixture(chosen)
    cov = feature_covariance(sim, mix, h)
    if cov.min_eig <= 1e-10:
        dead = dead_coordinates(sim, h)
        warnings.warn(
            f"step {h}: design reached lambda_min {cov.min_eig:.3g}; unreachable feature coordinates {dead}",
            RuntimeWarning, stacklevel=2,
        )
    return ExplorationPolicySet(
        h, chosen, np.full(len(chosen), 1.0 / len(chosen)), cov.matrix, cov.min_eig, target, mode,
        len(policies), stop, float(zeta), np.array(history),
    )


# ---------------------------------------------------------------------------
# CoverTraj


def cover_traj_schedule(d: int, beta: float) -> tuple[int, list[float], list[int]]:
    """Stage count ``m = ceil(log2(1/beta))``, thresholds ``gamma_i = 2^i beta`` and sizes ``K_i``.

    ``K_i = ceil(2^i (24 d / gamma_i^2) ln(48 2^i d / gamma_i^2))`` with the natural log.
    """
    if not 0 < beta <= 1:
        raise ConfigurationError(f"beta must lie in (0, 1], got {beta}")
    m = max(math.ceil(math.log2(1.0 / beta) - 1e-12), 0)
    gammas = [2**i * beta for i in range(1, m + 1)]
    sizes = [
        math.ceil(2**i * (24 * d / g**2) * math.log(48 * 2**i * d / g**2)) for i, g in zip(range(1, m + 1), gammas)
    ]
    return m, gammas, sizes


@dataclass(frozen=True, eq=False)
class CoverTrajOutput:
    h: int
    beta: float
    regularizer: float
    gammas: tuple
    episode_counts: tuple
    covariances: tuple  # Lambda_{h,i}
    covered: tuple  # X_{h,i}: tuple of (s, a) pairs per stage
    data: TransitionDataset
    policies: tuple  # distinct collection policies (action tables with uniform step h onward)
    policy_counts: tuple
    seed: int

    @property
    def total_episodes(self) -> int:
        return int(sum(self.episode_counts))

    def assigned(self) -> set:
        return {p for stage in self.covered for p in stage}

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "beta": self.beta,
            "regularizer": self.regularizer,
            "gammas": list(self.gammas),
            "episode_counts": list(self.episode_counts),
            "covariances": [np.asarray(c).tolist() for c in self.covariances],
            "covered": [[list(p) for p in stage] for stage in self.covered],
            "policies": [np.asarray(p).tolist() for p in self.policies],
            "policy_counts": list(self.policy_counts),
            "seed": self.seed,
            "data": {c: getattr(self.data, c).tolist() for c in ("h", "s", "a", "r", "s_next")},
        }


def cover_traj(sim: TabularMDP, h: int, beta: float, seed: int = 0, regularizer: float = 1.0,
               max_episodes: int = 2_000_000) -> CoverTrajOutput:
    """Reward-free collection targeting step ``h``.

    Stage ``i`` runs ``K_i`` episodes. Each episode plans, by exact value
    iteration, for the uncertainty reward ``phi^T Lambda^-1 phi`` on pairs
    not yet assigned, with the action at step ``h`` and after uniform, then
    rolls out once in the simulator. ``Lambda_{h,i} = regularizer * I + sum phi phi^T``
    over the stage. At the end of the stage, unassigned pairs with
    ``phi^T Lambda_{h,i}^-1 phi <= gamma_i^2`` form ``X_{h,i}``.
    """
    phi = _require_features(sim)
    _check_step(sim, h)
    S, A, d = phi.shape
    H = sim.horizon
    m, gammas, sizes = cover_traj_schedule(d, beta)
    if sum(sizes) > max_episodes:
        raise BudgetError(f"cover_traj at step {h} needs {sum(sizes)} episodes, above the cap {max_episodes}")
    P = sim.transitions
    cdf = sim.transition_cdf
    feats = phi.reshape(S * A, d)
    unassigned = np.ones((S, A), dtype=bool)
    covs, covered = [], []
    rows_h, rows_s, rows_a, rows_s2 = [], [], [], []
    policy_index: dict[bytes, int] = {}
    policy_tables: list[np.ndarray] = []
    policy_counts: list[int] = []
    for i, (g, k_i) in enumerate(zip(gammas, sizes), start=1):
        lam = regularizer * np.eye(d)
        lam_inv = np.eye(d) / regularizer
        rng = episode_generator(seed, "cover-traj", h, i)
        u = rng.random((k_i, H, 2))
        states = np.empty((k_i, H), dtype=int)
        actions = np.empty((k_i, H), dtype=int)
        nxt = np.empty((k_i, H), dtype=int)
        mask = unassigned.reshape(-1)
        for ep in range(k_i):
            bonus = np.einsum("ni,ij,nj->n", feats, lam_inv, feats) * mask
            r_state = bonus.reshape(S, A).mean(axis=1)
            # value iteration restricted to steps 1..h; step h and later are uniform
            v = r_state
            acts = np.empty((h - 1, S), dtype=int)
            for k in range(h - 2, -1, -1):
                q = P[k] @ v
                acts[k] = np.argmax(q, axis=1)
                v = q.max(axis=1)
            key = acts.tobytes()
            if key not in policy_index:
                policy_index[key] = len(policy_tables)
                policy_tables.append(acts.copy())
                policy_counts.append(0)
            policy_counts[policy_index[key]] += 1
            s = sim.init_state
            for k in range(H):
                if k < h - 1:
                    a = int(acts[k, s])
                else:
                    a = min(int(u[ep, k, 0] * A), A - 1)
                s2 = int(np.searchsorted(cdf[k, s, a], u[ep, k, 1], side="right"))
                s2 = min(s2, S - 1)
                states[ep, k], actions[ep, k], nxt[ep, k] = s, a, s2
                if k == h - 1:
                    x = phi[s, a]
                    lam = lam + np.outer(x, x)
                    lx = lam_inv @ x
                    lam_inv = lam_inv - np.outer(lx, lx) / (1.0 + x @ lx)
                s = s2
        rows_h.append(np.broadcast_to(np.arange(1, H + 1), (k_i, H)).reshape(-1))
        rows_s.append(states.reshape(-1))
        rows_a.append(actions.reshape(-1))
        rows_s2.append(nxt.reshape(-1))
        lam = 0.5 * (lam + lam.T)
        exact_inv = np.linalg.inv(lam)
        widths = np.einsum("sai,ij,saj->sa", phi, exact_inv, phi)
        stage = [(int(s), int(a)) for s, a in zip(*np.nonzero(unassigned & (widths <= g**2)))]
        for s, a in stage:
            unassigned[s, a] = False
        covs.append(lam)
        covered.append(tuple(stage))
    if rows_h:
        hh, ss, aa, s2 = (np.concatenate(x) for x in (rows_h, rows_s, rows_a, rows_s2))
        data = TransitionDataset(hh, ss, aa, sim.rewards[hh - 1, ss, aa], s2)
    else:
        data = TransitionDataset.empty()
    tables = []
    for acts in policy_tables:
        full = np.zeros((H, S), dtype=int)
        full[: h - 1] = acts
        tables.append(full)
    return CoverTrajOutput(
        h, float(beta), float(regularizer), tuple(gammas), tuple(sizes), tuple(covs), tuple(covered),
        data, tuple(tables), tuple(policy_counts), int(seed),
    )


def cover_traj_policy(sim: TabularMDP, out: CoverTrajOutput, index: int) -> Policy:
    """Collection policy ``index`` as a policy object (uniform from step ``h`` on)."""
    return randomize_after(deterministic(out.policies[index], sim.num_actions), out.h - 1)


@dataclass(frozen=True)
class CoverTrajCheck:
    h: int
    beta: float
    stage_mass: tuple  # sup_pi w_h(X_{h,i})
    stage_bounds: tuple  # 2^{-i+1}
    max_width_ratio: float  # max over assigned pairs of phi^T Lambda^-1 phi / gamma_i^2
    uncovered_mass: float
    partition_ok: bool

    @property
    def passed(self) -> bool:
        tol = 1e-12
        return (
            all(m <= b + tol for m, b in zip(self.stage_mass, self.stage_bounds))
            and self.max_width_ratio <= 1 + 1e-12
            and self.uncovered_mass <= self.beta + tol
            and self.partition_ok
        )


def check_cover_traj(sim: TabularMDP, out: CoverTrajOutput) -> CoverTrajCheck:
    """Verify the per-stage reach bound, the ellipsoid test and the uncovered mass exactly."""
    phi = _require_features(sim)
    masses, bounds, ratio = [], [], 0.0
    seen: set = set()
    partition_ok = True
    for i, (g, lam, stage) in enumerate(zip(out.gammas, out.covariances, out.covered), start=1):
        masses.append(max_visit_probability(sim, out.h, stage) if stage else 0.0)
        bounds.append(2.0 ** (-i + 1))
        inv = np.linalg.inv(lam)
        for s, a in stage:
            ratio = max(ratio, float(phi[s, a] @ inv @ phi[s, a]) / g**2)
            partition_ok &= (s, a) not in seen
            seen.add((s, a))
    unc = uncovered_mass(sim, out.h, seen)
    return CoverTrajCheck(out.h, out.beta, tuple(masses), tuple(bounds), ratio, unc, partition_ok)


# ---------------------------------------------------------------------------
# Coverage report


@dataclass(frozen=True)
class StepCoverage:
    h: int
    lambda_hat: float  # certified: achieved by an explicit mixture
    lambda_exact: float | None
    dead_coordinates: tuple
    uncovered_mass: float | None = None


@dataclass(frozen=True)
class CoverageReport:
    steps: tuple

    @property
    def lambda_min_star(self) -> float:
        return min(s.lambda_hat for s in self.steps)

    def step(self, h: int) -> StepCoverage:
        return self.steps[h - 1]


def reachability_estimate(sim: TabularMDP, zeta: float = 1e-3, max_rounds: int = 2000, patience: int = 50,
                          exact: bool = True) -> CoverageReport:
    """Per-step ``lambda_hat*`` from a long design run, with the exact SDP value alongside."""
    _require_features(sim)
    out = []
    for h in range(1, sim.horizon + 1):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ex = lambda_star(sim, h) if exact else None
            design = learn_exp_policies(sim, h, zeta=zeta, max_rounds=max_rounds, patience=patience,
                                        target=ex if ex else None)
        dead = tuple(dead_coordinates(sim, h))
        if dead:
            warnings.warn(f"step {h}: feature coordinates {list(dead)} are unreachable", RuntimeWarning, stacklevel=2)
        lam_hat = 0.0 if dead else design.min_eig
        out.append(StepCoverage(h, lam_hat, ex, dead))
    return CoverageReport(tuple(out))


def mixture_covariance(sim: TabularMDP, policy: Policy, h: int) -> np.ndarray:
    phi = _require_features(sim)
    return covariance_from_occupancy(phi, occupancy_measures(sim, policy).step(h))
