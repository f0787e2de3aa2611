"""Nonstationary policies and Q-tables.

Every policy reduces to one of two concrete forms:

* ``MarkovPolicy``: a table ``probs[h, s, a]`` (steps 0-based in memory,
  step ``h`` in the docs is ``probs[h - 1]``).
* ``MixturePolicy``: a component is drawn once at the start of the episode
  and then followed for all ``H`` steps.

The wrappers (``zeta_greedy``, ``randomize_after``, ``greedy_of_q``) act
step-wise, so applied to a Markov policy they give a Markov policy and applied
to a mixture they distribute over its components.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError

PROB_TOL = 1e-9


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QFunction:
    """Per-step state-action table ``values[h, s, a]`` bounded in ``[0, v_max]``."""

    values: np.ndarray
    v_max: float | None = None

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 3:
            raise ConfigurationError(f"QFunction needs shape [H,S,A], got {vals.shape}")
        vmax = float(vals.shape[0]) if self.v_max is None else float(self.v_max)
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("QFunction has non-finite entries")
        if vals.size and (vals.min() < -PROB_TOL or vals.max() > vmax + PROB_TOL):
            raise ConfigurationError(
                f"QFunction entries must lie in [0, {vmax}], got [{vals.min()}, {vals.max()}]"
            )
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "v_max", vmax)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def constant(cls, H: int, S: int, A: int, value: float = 0.0, v_max: float | None = None) -> "QFunction":
        return cls(np.full((H, S, A), float(value)), v_max)


@dataclass(frozen=True, eq=False)
class MarkovPolicy:
    probs: np.ndarray
    name: str = "markov"

    def __post_init__(self):
        p = np.array(self.probs, dtype=float, copy=True)
        if p.ndim != 3:
            raise ConfigurationError(f"policy table needs shape [H,S,A], got {p.shape}")
        if np.any(p < -PROB_TOL):
            raise ConfigurationError("policy has negative probabilities")
        dev = np.abs(p.sum(-1) - 1.0)
        if np.any(dev > PROB_TOL):
            h, s = np.unravel_index(int(np.argmax(dev)), dev.shape)
            raise ConfigurationError(f"action probabilities at (h={h + 1}, s={s}) do not sum to 1")
        p = np.clip(p, 0.0, None)
        fix = np.abs(p.sum(-1) - 1.0) > 1e-12
        if np.any(fix):
            p[fix] /= p[fix].sum(-1, keepdims=True)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def horizon(self) -> int:
        return self.probs.shape[0]

    @property
    def num_states(self) -> int:
        return self.probs.shape[1]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[2]

    def action_probs(self, h: int, s: int) -> np.ndarray:
        """Distribution over actions at 1-based step ``h`` in state ``s``."""
        return self.probs[h - 1, s]

    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))


@dataclass(frozen=True, eq=False)
class MixturePolicy:
    """Episode-level mixture: one component is sampled per episode."""

    weights: np.ndarray
    components: tuple = field(default_factory=tuple)
    name: str = "mixture"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        comps = tuple(self.components)
        if w.ndim != 1 or len(w) != len(comps) or len(comps) == 0:
            raise ConfigurationError("mixture needs one weight per component and at least one component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > PROB_TOL:
            raise ConfigurationError("mixture weights must be nonnegative and sum to 1")
        shapes = {c.probs.shape for c in comps}
        if len(shapes) != 1 or not all(isinstance(c, MarkovPolicy) for c in comps):
            raise ConfigurationError("mixture components must be Markov policies of one shape")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def horizon(self) -> int:
        return self.components[0].horizon

    @property
    def num_states(self) -> int:
        return self.components[0].num_states

    @property
    def num_actions(self) -> int:
        return self.components[0].num_actions


Policy = Union[MarkovPolicy, MixturePolicy]


def components(policy: Policy) -> list[tuple[float, MarkovPolicy]]:
    """``(weight, component)`` pairs; a Markov policy is its own single component."""
    if isinstance(policy, MarkovPolicy):
        return [(1.0, policy)]
    if isinstance(policy, MixturePolicy):
        return list(zip(policy.weights.tolist(), policy.components))
    raise ConfigurationError(f"not a policy: {type(policy).__name__}")


def deterministic(actions, num_actions: int, name: str = "deterministic") -> MarkovPolicy:
    """Policy from an integer table ``actions[h, s]``."""
    acts = np.asarray(actions, dtype=int)
    if acts.ndim != 2 or acts.min() < 0 or acts.max() >= num_actions:
        raise ConfigurationError("deterministic policy needs an [H,S] table of valid action indices")
    probs = np.zeros(acts.shape + (num_actions,))
    np.put_along_axis(probs, acts[..., None], 1.0, axis=-1)
    return MarkovPolicy(probs, name)


def constant_action(H: int, S: int, A: int, action: int, name: str | None = None) -> MarkovPolicy:
    return deterministic(np.full((H, S), action), A, name or f"always-a{action + 1}")


def stochastic(probs, name: str = "stochastic") -> MarkovPolicy:
    return MarkovPolicy(probs, name)


def uniform(H: int, S: int, A: int) -> MarkovPolicy:
    return MarkovPolicy(np.full((H, S, A), 1.0 / A), "uniform")


def mixture(weights: Sequence[float], policies: Sequence[Policy], name: str = "mixture") -> MixturePolicy:
    """Mixture of policies; nested mixtures are flattened."""
    flat_w: list[float] = []
    flat_c: list[MarkovPolicy] = []
    if len(weights) != len(policies):
        raise ConfigurationError("mixture needs one weight per policy")
    for w, p in zip(weights, policies):
        for cw, c in components(p):
            flat_w.append(float(w) * cw)
            flat_c.append(c)
    return MixturePolicy(np.array(flat_w), tuple(flat_c), name)


def uniform_mixture(policies: Sequence[Policy], name: str = "uniform-mixture") -> MixturePolicy:
    n = len(policies)
    if n == 0:
        raise ConfigurationError("uniform mixture over an empty set")
    return mixture([1.0 / n] * n, policies, name)


def greedy_of_q(q: QFunction, name: str = "greedy") -> MarkovPolicy:
    """Argmax per ``(h, s)``; ties go to the lowest action index."""
    vals = q.values if isinstance(q, QFunction) else np.asarray(q, dtype=float)
    return deterministic(np.argmax(vals, axis=-1), vals.shape[-1], name)


def _map_components(policy: Policy, fn, name: str) -> Policy:
    if isinstance(policy, MarkovPolicy):
        return MarkovPolicy(fn(policy.probs), name)
    comps = tuple(MarkovPolicy(fn(c.probs), c.name) for c in policy.components)
    return MixturePolicy(policy.weights, comps, name)


def zeta_greedy(base: Policy | QFunction, zeta: float) -> Policy:
    """Follow ``base`` w.p. ``1 - zeta`` and a uniform action otherwise, at every step."""
    if not 0.0 <= zeta <= 1.0:
        raise ConfigurationError(f"zeta must lie in [0, 1], got {zeta}")
    if isinstance(base, QFunction):
        base = greedy_of_q(base)
    A = base.num_actions

    def wrap(p):
        return (1.0 - zeta) * p + zeta / A

    return _map_components(base, wrap, f"zeta-greedy({zeta:g})")


def randomize_after(base: Policy, h0: int) -> Policy:
    """Delegate to ``base`` for steps ``h <= h0``; uniform for ``h > h0``."""
    H, A = base.horizon, base.num_actions
    if not 0 <= h0 <= H:
        raise ConfigurationError(f"switch step must lie in [0, {H}], got {h0}")

    def wrap(p):
        out = np.array(p, copy=True)
        out[h0:] = 1.0 / A
        return out

    return _map_components(base, wrap, f"randomize-after({h0})")


def uniform_at_step(base: Policy, h: int) -> Policy:
    """Replace only step ``h`` (1-based) with the uniform action."""
    A = base.num_actions

    def wrap(p):
        out = np.array(p, copy=True)
        out[h - 1] = 1.0 / A
        return out

    return _map_components(base, wrap, f"uniform-at({h})")
