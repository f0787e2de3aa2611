"""Tabular least-squares regression, fitted Q-iteration and its sim-anchored
constrained variant.

For the class of all tables, least squares decouples per cell into a mean, so
every fit here runs on sufficient statistics: visit counts ``n[h,s,a]``,
reward sums and next-state counts ``[h,s,a,s']``. A cell's Bellman target
mean under ``v_{h+1}`` is ``(rsum + next_counts @ v_{h+1}) / n``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .mdp import RolloutBatch, TabularMDP, Trajectory, value_iteration
from .policies import MarkovPolicy, QFunction, greedy_of_q
from .rng import episode_generator


@dataclass(frozen=True, eq=False)
class TransitionDataset:
    """Flat ``(h, s, a, r, s_next)`` tuples with 1-based ``h``."""

    h: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray

    def __post_init__(self):
        cols = {}
        for name, dtype in (("h", int), ("s", int), ("a", int), ("r", float), ("s_next", int)):
            col = np.array(getattr(self, name), dtype=dtype, copy=True).reshape(-1)
            col.setflags(write=False)
            cols[name] = col
        if len({len(c) for c in cols.values()}) != 1:
            raise ConfigurationError("dataset columns differ in length")
        if len(cols["h"]) and cols["h"].min() < 1:
            raise ConfigurationError("step indices must be 1-based")
        for name, col in cols.items():
            object.__setattr__(self, name, col)

    def __len__(self) -> int:
        return len(self.h)

    @classmethod
    def empty(cls) -> "TransitionDataset":
        return cls([], [], [], [], [])

    @classmethod
    def from_tuples(cls, rows) -> "TransitionDataset":
        rows = list(rows)
        if not rows:
            return cls.empty()
        h, s, a, r, s2 = zip(*rows)
        return cls(h, s, a, r, s2)

    @classmethod
    def from_trajectories(cls, trajs: list[Trajectory]) -> "TransitionDataset":
        return cls.from_tuples(step for t in trajs for step in t.steps)

    @classmethod
    def from_batch(cls, batch: RolloutBatch) -> "TransitionDataset":
        n, H = batch.states.shape
        hh = np.broadcast_to(np.arange(1, H + 1), (n, H))
        return cls(hh, batch.states, batch.actions, batch.rewards, batch.next_states)

    def concat(self, other: "TransitionDataset") -> "TransitionDataset":
        return TransitionDataset(*(np.concatenate([getattr(self, c), getattr(other, c)]) for c in COLUMNS))

    def step(self, h: int) -> "TransitionDataset":
        m = self.h == h
        return TransitionDataset(*(getattr(self, c)[m] for c in COLUMNS))

    def counts(self, H: int, S: int, A: int) -> np.ndarray:
        n = np.zeros((H, S, A))
        np.add.at(n, (self.h - 1, self.s, self.a), 1.0)
        return n

    def tuples(self):
        return list(zip(self.h.tolist(), self.s.tolist(), self.a.tolist(), self.r.tolist(), self.s_next.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for h, s, a, r, s2 in self.tuples():
                w.writerow([h, s, a, repr(float(r)), s2])

    @classmethod
    def from_csv(cls, path) -> "TransitionDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip() for c in header] != list(COLUMNS):
                raise ConfigurationError(f"dataset CSV needs header {','.join(COLUMNS)}, got {header}")
            rows = [(int(h), int(s), int(a), float(r), int(s2)) for h, s, a, r, s2 in reader]
        return cls.from_tuples(rows)


COLUMNS = ("h", "s", "a", "r", "s_next")


@dataclass(eq=False)
class SufficientStats:
    """Per-cell counts, reward sums and next-state counts. Mutable, single owner."""

    n: np.ndarray
    rsum: np.ndarray
    next_counts: np.ndarray

    @classmethod
    def zeros(cls, H: int, S: int, A: int) -> "SufficientStats":
        return cls(np.zeros((H, S, A)), np.zeros((H, S, A)), np.zeros((H, S, A, S)))

    @classmethod
    def from_dataset(cls, data: TransitionDataset, H: int, S: int, A: int) -> "SufficientStats":
        st = cls.zeros(H, S, A)
        st.add(data)
        return st

    @property
    def shape(self):
        return self.n.shape

    def add(self, data: TransitionDataset) -> None:
        H, S, A = self.n.shape
        if len(data) == 0:
            return
        if data.h.max() > H or data.s.max() >= S or data.a.max() >= A or data.s_next.max() >= S:
            raise ConfigurationError("dataset indices exceed the MDP shape")
        idx = (data.h - 1, data.s, data.a)
        np.add.at(self.n, idx, 1.0)
        np.add.at(self.rsum, idx, data.r)
        np.add.at(self.next_counts, idx + (data.s_next,), 1.0)

    def add_trajectory(self, steps) -> None:
        for h, s, a, r, s2 in steps:
            self.n[h - 1, s, a] += 1.0
            self.rsum[h - 1, s, a] += r
            self.next_counts[h - 1, s, a, s2] += 1.0

    def copy(self) -> "SufficientStats":
        return SufficientStats(self.n.copy(), self.rsum.copy(), self.next_counts.copy())


def _cell_means(stats: SufficientStats, k: int, v_next: np.ndarray, default_value: float, v_max: float):
    n = stats.n[k]
    mean = (stats.rsum[k] + stats.next_counts[k] @ v_next) / np.where(n > 0, n, 1.0)
    return np.clip(np.where(n > 0, mean, default_value), 0.0, v_max), n


def lsq_regress(data_h, S: int, A: int, default_value: float = 0.0, v_max: float | None = None) -> np.ndarray:
    """Least squares over all ``S x A`` tables: per-cell mean, ``default_value`` where empty."""
    n = np.zeros((S, A))
    tot = np.zeros((S, A))
    for s, a, y in data_h:
        if not math.isfinite(y):
            raise ConfigurationError("regression targets must be finite")
        n[s, a] += 1.0
        tot[s, a] += y
    mean = np.divide(tot, n, out=np.full((S, A), float(default_value)), where=n > 0)
    return mean if v_max is None else np.clip(mean, 0.0, v_max)


def fqi_from_stats(stats: SufficientStats, default_value: float = 0.0, v_max: float | None = None) -> QFunction:
    H, S, A = stats.shape
    vmax = float(H) if v_max is None else float(v_max)
    f = np.empty((H, S, A))
    seen = stats.n > 0
    denom = np.where(seen, stats.n, 1.0)
    v_next = np.zeros(S)
    for k in range(H - 1, -1, -1):
        mean = (stats.rsum[k] + stats.next_counts[k] @ v_next) / denom[k]
        f[k] = np.where(seen[k], mean, default_value)
        np.clip(f[k], 0.0, vmax, out=f[k])
        v_next = f[k].max(axis=-1)
    return QFunction(f, vmax)


def fqi(data: TransitionDataset, H: int, S: int, A: int, default_value: float = 0.0,
        v_max: float | None = None) -> QFunction:
    """Backward least-squares fits of ``r + max_a' f_{h+1}(s', a')`` with ``f_{H+1} = 0``."""
    return fqi_from_stats(SufficientStats.from_dataset(data, H, S, A), default_value, v_max)


def greedy_policy(f: QFunction) -> MarkovPolicy:
    return greedy_of_q(f, "greedy")


@dataclass(frozen=True, eq=False)
class ConstrainedFitReport:
    f_hat: QFunction
    f_sim: QFunction
    multipliers: np.ndarray  # per step; inf when gamma = 0 pins sim cells
    residuals: np.ndarray  # achieved mean squared deviation from the sim fit
    slack: np.ndarray  # gamma - residual
    active: np.ndarray  # bool per step
    gamma: float
    iterations: np.ndarray


def _blend(y_r, n_r, f_sim, n_s, lam, default_value):
    """Per-cell minimizer of ``n_r (f - y_r)^2 + lam n_s (f - f_sim)^2``."""
    out = np.where(n_r > 0, y_r, default_value)
    if lam == 0.0:
        return out
    sim_cells = n_s > 0
    if math.isinf(lam):
        return np.where(sim_cells, f_sim, out)
    num = n_r * y_r + lam * n_s * f_sim
    den = n_r + lam * n_s
    mixed = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return np.where(sim_cells, mixed, out)


def _sim_residual(f, f_sim, n_s) -> float:
    total = n_s.sum()
    if total == 0:
        return 0.0
    return float((n_s * (f - f_sim) ** 2).sum() / total)


def constrained_fqi(real_data: TransitionDataset, sim_data: TransitionDataset, gamma: float,
                    H: int, S: int, A: int, default_value: float = 0.0, v_max: float | None = None,
                    tol: float = 1e-10, max_iter: int = 200) -> ConstrainedFitReport:
    """FQI whose per-step fit stays within mean squared distance ``gamma`` of the sim fit.

    The multiplier per step is found by bisection in ``log(lambda)``; the
    feasible end of the bracket is returned, so the residual never exceeds
    ``gamma``.
    """
    if gamma < 0 or math.isnan(gamma):
        raise ConfigurationError(f"gamma must be >= 0, got {gamma}")
    vmax = float(H) if v_max is None else float(v_max)
    rs = SufficientStats.from_dataset(real_data, H, S, A)
    ss = SufficientStats.from_dataset(sim_data, H, S, A)
    f = np.empty((H, S, A))
    g = np.empty((H, S, A))
    lams = np.zeros(H)
    res = np.zeros(H)
    active = np.zeros(H, dtype=bool)
    iters = np.zeros(H, dtype=int)
    v_next = np.zeros(S)
    for k in range(H - 1, -1, -1):
        y_r, n_r = _cell_means(rs, k, v_next, default_value, vmax)
        g[k], n_s = _cell_means(ss, k, v_next, default_value, vmax)
        fit = _blend(y_r, n_r, g[k], n_s, 0.0, default_value)
        r0 = _sim_residual(fit, g[k], n_s)
        if n_s.sum() > 0 and r0 > gamma:
            # lambda -> 0+ limit: cells without real data take the sim value at no real-data cost
            limit = np.where((n_r == 0) & (n_s > 0), g[k], fit)
            if _sim_residual(limit, g[k], n_s) <= gamma:
                fit = limit
            else:
                active[k] = True
        if active[k]:
            if gamma == 0.0:
                lams[k] = math.inf
                fit = _blend(y_r, n_r, g[k], n_s, math.inf, default_value)
            else:
                lams[k], fit, iters[k] = _solve_multiplier(y_r, n_r, g[k], n_s, gamma, default_value, tol, max_iter, k)
        f[k] = np.clip(fit, 0.0, vmax)
        res[k] = _sim_residual(f[k], g[k], n_s)
        v_next = f[k].max(axis=-1)
    return ConstrainedFitReport(
        QFunction(f, vmax), QFunction(g, vmax), lams, res, gamma - res, active, float(gamma), iters
    )


def _solve_multiplier(y_r, n_r, f_sim, n_s, gamma, default_value, tol, max_iter, k):
    def resid(log_lam):
        fit = _blend(y_r, n_r, f_sim, n_s, math.exp(log_lam), default_value)
        return _sim_residual(fit, f_sim, n_s), fit

    lo, hi = -40.0, 0.0
    r_hi, fit_hi = resid(hi)
    while r_hi > gamma:
        lo, hi = hi, hi + 10.0
        if hi > 700:
            raise NumericalError(f"step {k + 1}: residual stays above gamma={gamma} for every multiplier")
        r_hi, fit_hi = resid(hi)
    r_lo, _ = resid(lo)
    if r_lo <= gamma:
        return math.exp(lo), _blend(y_r, n_r, f_sim, n_s, math.exp(lo), default_value), 0
    for it in range(1, max_iter + 1):
        if gamma - r_hi <= tol:
            return math.exp(hi), fit_hi, it
        mid = 0.5 * (lo + hi)
        r_mid, fit_mid = resid(mid)
        if r_mid > gamma:
            lo = mid
        else:
            hi, r_hi, fit_hi = mid, r_mid, fit_mid
        if hi - lo < 1e-15:
            return math.exp(hi), fit_hi, it
    raise NumericalError(
        f"step {k + 1}: multiplier bisection did not reach tolerance {tol} in {max_iter} iterations "
        f"(bracket log-lambda [{lo}, {hi}], residual {r_hi}, gamma {gamma})"
    )


def effective_log_cardinality(S: int, A: int, H: int, resolution: float = 1e-2) -> float:
    """Stand-in for ``log |F|`` of the all-tables class discretized at ``resolution``."""
    return S * A * H * math.log(1.0 + H / resolution)


BUFFER_MODES = ("none", "one_per_sah", "one_per_sah_adversarial")


def seed_buffer(mdp: TabularMDP, mode: str, seed: int = 0) -> TransitionDataset:
    """One transition from every ``(h, s, a)``.

    ``one_per_sah`` samples the next state; ``one_per_sah_adversarial`` picks
    the support state with the lowest optimal value ``V*_{h+1}`` (lowest index
    on ties), the worst single sample a learner could see.
    """
    if mode not in BUFFER_MODES:
        raise ConfigurationError(f"buffer_init must be one of {BUFFER_MODES}, got {mode!r}")
    if mode == "none":
        return TransitionDataset.empty()
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    rows = []
    if mode == "one_per_sah_adversarial":
        Q, _ = value_iteration(mdp.transitions, mdp.rewards)
        V = np.vstack([Q.max(axis=-1), np.zeros((1, S))])
    else:
        g = episode_generator(seed, "seed-buffer", 0, 0)
        u = g.random((H, S, A))
    for k in range(H):
        for s in range(S):
            for a in range(A):
                row = mdp.transitions[k, s, a]
                if mode == "one_per_sah_adversarial":
                    support = np.flatnonzero(row > 0)
                    s2 = int(support[np.argmin(V[k + 1, support])])
                else:
                    s2 = int(min(np.searchsorted(np.cumsum(row), u[k, s, a], side="right"), S - 1))
                rows.append((k + 1, s, a, float(mdp.rewards[k, s, a]), s2))
    return TransitionDataset.from_tuples(rows)


@dataclass(eq=False)
class FQILearner:
    """Incremental FQI estimate ``f^t``, refit every ``refit_period`` episodes.

    With ``refit_period = 1`` the estimate after each episode is exactly
    ``fqi`` on everything observed so far.
    """

    H: int
    S: int
    A: int
    default_value: float = 0.0
    v_max: float | None = None
    refit_period: int = 1
    stats: SufficientStats = field(init=False)
    episodes: int = field(init=False, default=0)
    q: QFunction = field(init=False)

    def __post_init__(self):
        if self.refit_period < 1:
            raise ConfigurationError("refit_period must be >= 1")
        self.stats = SufficientStats.zeros(self.H, self.S, self.A)
        self.refit()

    def seed(self, data: TransitionDataset) -> None:
        self.stats.add(data)
        self.refit()

    def refit(self) -> QFunction:
        self.q = fqi_from_stats(self.stats, self.default_value, self.v_max)
        self._policy = None
        return self.q

    def observe(self, steps) -> None:
        """Add one episode (a ``Trajectory`` or its step tuples)."""
        self.stats.add_trajectory(steps.steps if isinstance(steps, Trajectory) else steps)
        self.episodes += 1
        if self.episodes % self.refit_period == 0:
            self.refit()

    def observe_batch(self, data: TransitionDataset, episodes: int) -> None:
        self.stats.add(data)
        self.episodes += episodes
        self.refit()

    def policy(self) -> MarkovPolicy:
        if self._policy is None:
            self._policy = greedy_policy(self.q)
        return self._policy

    def greedy_actions(self) -> np.ndarray:
        return np.argmax(self.q.values, axis=-1)
