"""Finite-horizon tabular MDPs and exact dynamic programming.

Step convention
---------------
Steps are ``h = 1..H`` and a reward is collected at every step, including
``H``. Arrays are 0-based, so step ``h`` lives at index ``h - 1``. The value
after the last step is zero (``f_{H+1} = 0``) and ``V_max = H``. Sums written
0-based elsewhere (``sum_{h=0}^{H-1}``) are translated to ``sum_{h=1}^{H}``
once, here.

A policy reaches state ``s`` at step ``h`` after ``h - 1`` transitions, so in
the combination lock the state at step ``H - 1`` depends on the actions taken
at steps ``1..H-2``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import InitVar, dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from .errors import ConfigurationError
from .policies import MarkovPolicy, MixturePolicy, Policy, QFunction, components, deterministic

ROW_TOL = 1e-9
RENORM_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class LowRankFactorization:
    """``P_h(s'|s,a) = <phi[s,a], mu[h,:,s']>``."""

    phi: np.ndarray  # [S, A, d]
    mu: np.ndarray  # [H, d, S]

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float, copy=True)
        mu = np.array(self.mu, dtype=float, copy=True)
        if phi.ndim != 3 or mu.ndim != 3 or phi.shape[2] != mu.shape[1]:
            raise ConfigurationError(f"factorization shapes disagree: phi {phi.shape}, mu {mu.shape}")
        phi.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        return self.phi.shape[2]

    def kernel(self) -> np.ndarray:
        return np.einsum("sad,hdt->hsat", self.phi, self.mu)

    def issues(self) -> list[str]:
        out = []
        norms = np.linalg.norm(self.phi, axis=-1)
        if norms.max() > 1 + ROW_TOL:
            s, a = np.unravel_index(int(np.argmax(norms)), norms.shape)
            out.append(f"||phi(s={s},a={a})|| = {norms[s, a]:.12g} exceeds 1")
        tv = np.linalg.norm(np.abs(self.mu).sum(axis=2), axis=1)
        bound = np.sqrt(self.dim) + ROW_TOL
        for h in np.flatnonzero(tv > bound):
            out.append(f"mu at h={h + 1} has total-variation norm {tv[h]:.12g} above sqrt(d)")
        return out

    @classmethod
    def one_hot(cls, transitions: np.ndarray) -> "LowRankFactorization":
        """Tabular featurization with ``d = S * A``: ``phi`` is the indicator of ``(s, a)``."""
        H, S, A, _ = transitions.shape
        phi = np.eye(S * A).reshape(S, A, S * A)
        mu = np.asarray(transitions, dtype=float).reshape(H, S * A, S)
        return cls(phi, mu)


def mdp_issues(transitions, rewards, init_state=0, factorization: LowRankFactorization | None = None) -> list[str]:
    """Every invariant violation of a candidate MDP, as readable strings with locations."""
    P = np.asarray(transitions, dtype=float)
    r = np.asarray(rewards, dtype=float)
    out: list[str] = []
    if P.ndim != 4 or P.shape[1] != P.shape[3]:
        return [f"transitions need shape [H,S,A,S], got {P.shape}"]
    H, S, A, _ = P.shape
    if r.shape != (H, S, A):
        out.append(f"rewards need shape {(H, S, A)}, got {r.shape}")
    if not 0 <= int(init_state) < S:
        out.append(f"init_state {init_state} out of range")
    if np.any(P < 0):
        h, s, a, t = np.argwhere(P < 0)[0]
        out.append(f"negative transition probability at (h={h + 1}, s={s}, a={a}, s'={t})")
    dev = np.abs(P.sum(-1) - 1.0)
    for h, s, a in np.argwhere(dev > ROW_TOL):
        out.append(f"transition row (h={h + 1}, s={s}, a={a}) sums to {P[h, s, a].sum():.12g}")
    if r.shape == (H, S, A) and (np.any(r < 0) or np.any(r > 1) or not np.all(np.isfinite(r))):
        h, s, a = np.argwhere((r < 0) | (r > 1) | ~np.isfinite(r))[0]
        out.append(f"reward at (h={h + 1}, s={s}, a={a}) = {r[h, s, a]} outside [0, 1]")
    if factorization is not None:
        if factorization.phi.shape[:2] != (S, A) or factorization.mu.shape[0] != H or factorization.mu.shape[2] != S:
            out.append("factorization shape does not match the MDP")
        else:
            out.extend(factorization.issues())
            err = np.abs(factorization.kernel() - P)
            if err.max() > ROW_TOL:
                h, s, a, t = np.unravel_index(int(np.argmax(err)), err.shape)
                out.append(f"factorization misses P at (h={h + 1}, s={s}, a={a}, s'={t}) by {err.max():.3g}")
    return out


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite-horizon MDP with known deterministic rewards in ``[0, 1]``.

    Rows within ``1e-9`` of summing to one are renormalized; anything further
    off is a ``ConfigurationError``. Pass ``validate=False`` only to build a
    deliberately broken tensor for validator demos.
    """

    transitions: np.ndarray  # [H, S, A, S]
    rewards: np.ndarray  # [H, S, A]
    init_state: int = 0
    factorization: LowRankFactorization | None = None
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool):
        P = np.array(self.transitions, dtype=float, copy=True)
        r = np.array(self.rewards, dtype=float, copy=True)
        if validate:
            problems = mdp_issues(P, r, self.init_state, self.factorization)
            if problems:
                raise ConfigurationError("; ".join(problems))
            sums = P.sum(-1, keepdims=True)
            off = np.abs(sums - 1.0) > RENORM_FLOOR
            if np.any(off):
                P = np.where(off, P / sums, P)
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "init_state", int(self.init_state))

    @property
    def horizon(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[2]

    H = horizon
    S = num_states
    A = num_actions

    @property
    def v_max(self) -> float:
        return float(self.horizon)

    @cached_property
    def transition_cdf(self) -> np.ndarray:
        return np.cumsum(self.transitions, axis=-1)

    def with_rewards(self, rewards) -> "TabularMDP":
        return TabularMDP(self.transitions, rewards, self.init_state, self.factorization)

    def featurized(self) -> "TabularMDP":
        """Same MDP with a factorization; the one-hot featurization when none is attached."""
        if self.factorization is not None:
            return self
        fac = LowRankFactorization.one_hot(self.transitions)
        return TabularMDP(self.transitions, self.rewards, self.init_state, fac)

    def to_dict(self) -> dict:
        out = {
            "S": self.num_states,
            "A": self.num_actions,
            "H": self.horizon,
            "init_state": self.init_state,
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
        }
        if self.factorization is not None:
            out["factorization"] = {
                "d": self.factorization.dim,
                "phi": self.factorization.phi.tolist(),
                "mu": self.factorization.mu.tolist(),
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMDP":
        fac = doc.get("factorization")
        factorization = None if fac is None else LowRankFactorization(fac["phi"], fac["mu"])
        mdp = cls(doc["transitions"], doc["rewards"], doc.get("init_state", 0), factorization)
        for key, val in (("S", mdp.num_states), ("A", mdp.num_actions), ("H", mdp.horizon)):
            if key in doc and int(doc[key]) != val:
                raise ConfigurationError(f"declared {key}={doc[key]} disagrees with tensor shape ({val})")
        return mdp

    @classmethod
    def from_json(cls, text: str) -> "TabularMDP":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Trajectory:
    steps: tuple  # of (h, s, a, r, s_next), h 1-based
    component: int = 0

    @property
    def total_return(self) -> float:
        return float(sum(step[3] for step in self.steps))

    def states(self) -> list[int]:
        return [step[1] for step in self.steps]

    def actions(self) -> list[int]:
        return [step[2] for step in self.steps]


@dataclass(frozen=True)
class PolicyValue:
    v0: float
    values: np.ndarray | None  # [H + 1, S]; None for episode-level mixtures


@dataclass(frozen=True)
class OptimalSolution:
    policy: MarkovPolicy
    q: QFunction
    v0: float


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    values: np.ndarray  # [H, S, A]

    def step(self, h: int) -> np.ndarray:
        return self.values[h - 1]

    def mass(self, h: int, pairs) -> float:
        """Probability of visiting any of ``pairs`` at 1-based step ``h``."""
        w = self.values[h - 1]
        return float(sum(w[s, a] for s, a in set(map(tuple, pairs))))


@dataclass(frozen=True, eq=False)
class CovarianceSummary:
    h: int
    matrix: np.ndarray
    min_eig: float
    exact: bool = True
    sample_count: int | None = None


def _check_pair(mdp: TabularMDP, policy: Policy) -> None:
    if not isinstance(policy, (MarkovPolicy, MixturePolicy)):
        raise ConfigurationError(f"expected a policy, got {type(policy).__name__}")
    if (
        policy.horizon < mdp.horizon
        or policy.num_states != mdp.num_states
        or policy.num_actions != mdp.num_actions
    ):
        raise ConfigurationError(
            f"policy shape (H={policy.horizon}, S={policy.num_states}, A={policy.num_actions}) "
            f"does not fit MDP (H={mdp.horizon}, S={mdp.num_states}, A={mdp.num_actions})"
        )


def _reward_table(mdp: TabularMDP, reward) -> np.ndarray:
    if reward is None:
        return mdp.rewards
    r = np.asarray(reward, dtype=float)
    if r.shape != mdp.rewards.shape:
        raise ConfigurationError(f"reward override needs shape {mdp.rewards.shape}, got {r.shape}")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ConfigurationError("reward override must be finite and nonnegative")
    return r


def _markov_q(P: np.ndarray, r: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    H, S, A = r.shape
    V = np.zeros((H + 1, S))
    Q = np.empty((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = r[h] + P[h] @ V[h + 1]
        V[h] = np.sum(probs[h] * Q[h], axis=-1)
    return Q, V


def policy_value_exact(mdp: TabularMDP, policy: Policy, reward=None) -> PolicyValue:
    """Exact value by backward induction. Mixtures average component values."""
    _check_pair(mdp, policy)
    r = _reward_table(mdp, reward)
    H = mdp.horizon
    parts = components(policy)
    if len(parts) == 1:
        _, V = _markov_q(mdp.transitions, r, parts[0][1].probs[:H])
        return PolicyValue(float(V[0, mdp.init_state]), V)
    v0 = 0.0
    for w, comp in parts:
        _, V = _markov_q(mdp.transitions, r, comp.probs[:H])
        v0 += w * V[0, mdp.init_state]
    return PolicyValue(float(v0), None)


def q_values_exact(mdp: TabularMDP, policy: Policy, reward=None) -> QFunction:
    """``Q^pi_h``. Undefined for an episode-level mixture, which is not Markov."""
    _check_pair(mdp, policy)
    if isinstance(policy, MixturePolicy) and len(policy.components) > 1:
        raise ConfigurationError("Q-values of an episode-level mixture are not defined")
    comp = components(policy)[0][1]
    r = _reward_table(mdp, reward)
    Q, _ = _markov_q(mdp.transitions, r, comp.probs[: mdp.horizon])
    return QFunction(Q, v_max=max(float(mdp.horizon), float(r.max(axis=(1, 2)).sum())))


def value_iteration(P: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw optimal ``Q[h,s,a]`` and greedy actions ``[h,s]`` (lowest index on ties)."""
    H, S, A = r.shape
    Q = np.empty((H, S, A))
    v = np.zeros(S)
    for h in range(H - 1, -1, -1):
        Q[h] = r[h] + P[h] @ v
        v = Q[h].max(axis=-1)
    return Q, np.argmax(Q, axis=-1)


def optimal_policy_vi(mdp: TabularMDP, reward=None) -> OptimalSolution:
    r = _reward_table(mdp, reward)
    Q, acts = value_iteration(mdp.transitions, r)
    policy = deterministic(acts, mdp.num_actions, "optimal")
    q = QFunction(Q, v_max=max(float(mdp.horizon), float(r.max(axis=(1, 2)).sum())))
    return OptimalSolution(policy, q, float(Q[0, mdp.init_state].max()))


def _markov_occupancy(P: np.ndarray, probs: np.ndarray, init_state: int) -> np.ndarray:
    H, S, A = probs.shape[0], P.shape[1], P.shape[2]
    w = np.empty((H, S, A))
    d = np.zeros(S)
    d[init_state] = 1.0
    for h in range(H):
        w[h] = d[:, None] * probs[h]
        if h + 1 < H:
            d = np.einsum("sa,sat->t", w[h], P[h])
    return w


def occupancy_measures(mdp: TabularMDP, policy: Policy) -> OccupancyMeasure:
    _check_pair(mdp, policy)
    H = mdp.horizon
    total = np.zeros((H, mdp.num_states, mdp.num_actions))
    for wt, comp in components(policy):
        total += wt * _markov_occupancy(mdp.transitions, comp.probs[:H], mdp.init_state)
    total.setflags(write=False)
    return OccupancyMeasure(total)


def covariance_from_occupancy(phi: np.ndarray, w_h: np.ndarray) -> np.ndarray:
    lam = np.einsum("sa,sai,saj->ij", w_h, phi, phi)
    return 0.5 * (lam + lam.T)


def min_eig(matrix: np.ndarray) -> float:
    return float(max(np.linalg.eigvalsh(matrix)[0], 0.0))


def feature_covariance(mdp: TabularMDP, policy: Policy, h: int) -> CovarianceSummary:
    """Exact ``E^pi[phi phi^T]`` at 1-based step ``h``."""
    if mdp.factorization is None:
        raise ConfigurationError("feature covariance needs a factorization")
    if not 1 <= h <= mdp.horizon:
        raise ConfigurationError(f"step {h} outside 1..{mdp.horizon}")
    occ = occupancy_measures(mdp, policy)
    lam = covariance_from_occupancy(mdp.factorization.phi, occ.step(h))
    return CovarianceSummary(h, lam, min_eig(lam), exact=True)


def tv_gap(mdp_a: TabularMDP, mdp_b: TabularMDP) -> tuple[float, tuple[int, int, int]]:
    """Largest per-(h,s,a) total-variation distance and its first location (1-based h)."""
    if mdp_a.transitions.shape != mdp_b.transitions.shape:
        raise ConfigurationError("tv_gap needs MDPs with identical S, A, H")
    tv = 0.5 * np.abs(mdp_a.transitions - mdp_b.transitions).sum(-1)
    h, s, a = np.unravel_index(int(np.argmax(tv)), tv.shape)
    return float(tv[h, s, a]), (int(h) + 1, int(s), int(a))


def bellman_apply(mdp: TabularMDP, f_next, h: int, reward=None) -> np.ndarray:
    """``(T f)(s,a) = r_h(s,a) + E[max_a' f_{h+1}(s',a')]``; ``f_next=None`` means zero."""
    r = _reward_table(mdp, reward)
    if f_next is None:
        v = np.zeros(mdp.num_states)
    else:
        v = np.asarray(f_next, dtype=float).max(axis=-1)
    return r[h - 1] + mdp.transitions[h - 1] @ v


def _component_index(weights: np.ndarray, u) -> np.ndarray:
    return np.minimum(np.searchsorted(np.cumsum(weights), u, side="right"), len(weights) - 1)


def _inverse_cdf(cdf: np.ndarray, u) -> np.ndarray:
    """Smallest index with ``cdf > u``; ``cdf`` rows over the last axis."""
    idx = (np.asarray(u)[..., None] >= cdf).sum(-1)
    return np.minimum(idx, cdf.shape[-1] - 1)


def trajectory_from_draws(mdp: TabularMDP, policy: Policy, pick: float, u: np.ndarray) -> Trajectory:
    parts = components(policy)
    k = int(_component_index(np.array([w for w, _ in parts]), pick)) if len(parts) > 1 else 0
    probs = parts[k][1].probs
    s = mdp.init_state
    steps = []
    for h in range(mdp.horizon):
        a = int(_inverse_cdf(np.cumsum(probs[h, s]), u[h, 0]))
        s_next = int(_inverse_cdf(mdp.transition_cdf[h, s, a], u[h, 1]))
        steps.append((h + 1, s, a, float(mdp.rewards[h, s, a]), s_next))
        s = s_next
    return Trajectory(tuple(steps), k)


def sample_trajectory(mdp: TabularMDP, policy: Policy, rng: np.random.Generator) -> Trajectory:
    """One episode. Consumes one uniform for the mixture pick, then ``(H, 2)`` uniforms."""
    _check_pair(mdp, policy)
    pick = rng.random()
    u = rng.random((mdp.horizon, 2))
    return trajectory_from_draws(mdp, policy, pick, u)


@dataclass(frozen=True, eq=False)
class RolloutBatch:
    states: np.ndarray  # [n, H]
    actions: np.ndarray  # [n, H]
    rewards: np.ndarray  # [n, H]
    next_states: np.ndarray  # [n, H]
    component: np.ndarray  # [n]

    @property
    def returns(self) -> np.ndarray:
        return self.rewards.sum(axis=1)

    def __len__(self) -> int:
        return self.states.shape[0]


def rollout_batch(mdp: TabularMDP, policy: Policy, picks: np.ndarray, u: np.ndarray) -> RolloutBatch:
    """Vectorized rollouts from pre-drawn uniforms; row ``i`` equals ``trajectory_from_draws`` on row ``i``."""
    _check_pair(mdp, policy)
    parts = components(policy)
    stack = np.stack([c.probs[: mdp.horizon] for _, c in parts])
    pol_cdf = np.cumsum(stack, axis=-1)
    n, H = len(picks), mdp.horizon
    if len(parts) > 1:
        comp = _component_index(np.array([w for w, _ in parts]), picks)
    else:
        comp = np.zeros(n, dtype=int)
    states = np.empty((n, H), dtype=int)
    actions = np.empty((n, H), dtype=int)
    nxt = np.empty((n, H), dtype=int)
    s = np.full(n, mdp.init_state)
    for h in range(H):
        a = _inverse_cdf(pol_cdf[comp, h, s], u[:, h, 0])
        s2 = _inverse_cdf(mdp.transition_cdf[h, s, a], u[:, h, 1])
        states[:, h], actions[:, h], nxt[:, h] = s, a, s2
        s = s2
    rewards = mdp.rewards[np.arange(H)[None, :], states, actions]
    return RolloutBatch(states, actions, rewards, nxt, comp)


def path_distribution(mdp: TabularMDP, policy: Policy) -> dict[tuple, float]:
    """Exact law of ``(s_1, a_1, ..., s_H, a_H, s_{H+1})`` by enumerating the tree."""
    _check_pair(mdp, policy)
    H = mdp.horizon
    out: dict[tuple, float] = {}

    def walk(probs, h, s, prefix, p):
        if h == H:
            out[prefix] = out.get(prefix, 0.0) + p
            return
        for a in np.flatnonzero(probs[h, s] > 0):
            pa = p * probs[h, s, a]
            for t in np.flatnonzero(mdp.transitions[h, s, a] > 0):
                walk(probs, h + 1, int(t), prefix + (int(a), int(t)), pa * mdp.transitions[h, s, a, t])

    for w, comp in components(policy):
        if w > 0:
            walk(comp.probs, 0, mdp.init_state, (mdp.init_state,), w)
    return out


def path_tv(law_a: dict, law_b: dict) -> float:
    keys = set(law_a) | set(law_b)
    return 0.5 * sum(abs(law_a.get(k, 0.0) - law_b.get(k, 0.0)) for k in keys)


def enumerate_deterministic_policies(mdp: TabularMDP, limit: int = 2**16) -> Iterator[MarkovPolicy]:
    """Every deterministic Markov policy; refuses when there are more than ``limit``."""
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    if A ** (H * S) > limit:
        raise ConfigurationError(f"{A}^{H * S} deterministic policies exceed the enumeration limit {limit}")
    for flat in itertools.product(range(A), repeat=H * S):
        yield deterministic(np.array(flat).reshape(H, S), A)
