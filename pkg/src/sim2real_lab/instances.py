"""Instance constructors: the combination lock pair family, the didactic lock,
the random-exploration counterexample, and a random low-rank generator.

State and action indices are 0-based in arrays: ``s1 -> 0``, ``a1 -> 0``.
Steps follow the 1-based convention of :mod:`sim2real_lab.mdp`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError, GenerationError
from .mdp import LowRankFactorization, TabularMDP, mdp_issues, tv_gap


@dataclass(frozen=True, eq=False)
class InstanceBundle:
    sim: TabularMDP
    reals: tuple
    eps_sim: float
    provenance: str
    variants: dict = field(default_factory=dict)
    real_names: tuple = ()

    @property
    def real(self) -> TabularMDP:
        """The first real instance (``M1`` where there are two)."""
        return self.reals[0]

    def named_reals(self) -> dict:
        names = self.real_names or tuple(f"real{i + 1}" for i in range(len(self.reals)))
        return dict(zip(names, self.reals))


def _lock_chain(H: int) -> np.ndarray:
    """Two-state lock skeleton: a1 keeps s1, a2 moves to s2, s2 absorbs."""
    P = np.zeros((H, 2, 2, 2))
    P[:, 0, 0, 0] = 1.0
    P[:, 0, 1, 1] = 1.0
    P[:, 1, :, 1] = 1.0
    return P


def make_comb_lock_d1(H: int, eps_sim: float, terminal_a2_reward: str = "as_written") -> InstanceBundle:
    """Combination lock with a sim and two real instances differing only at (s1, step H-1).

    ``terminal_a2_reward="as_written"`` keeps ``r_{H-1}(s1, a2)`` from the
    per-step formula; followed by ``r_H(s1, .) = 1`` this lets a two-reward
    path beat ``1/2 + eps``. ``"zeroed"`` sets ``r_{H-1}(s1, a2) = 0`` so the
    real optimum is exactly ``1/2 + eps`` in both real instances.
    """
    if H <= 2:
        raise ConfigurationError(f"combination lock needs H > 2, got {H}")
    if not 0 < eps_sim <= 1 / 6:
        raise ConfigurationError(f"eps_sim must lie in (0, 1/6], got {eps_sim}")
    if terminal_a2_reward not in ("as_written", "zeroed"):
        raise ConfigurationError(f"unknown variant {terminal_a2_reward!r}")
    e = float(eps_sim)
    k = H - 2  # index of step H-1

    sim = _lock_chain(H)
    sim[k, 0, :, :] = 0.5
    m1 = _lock_chain(H)
    m1[k, 0, 0] = [0.5 + e, 0.5 - e]
    m1[k, 0, 1] = [0.5 - e, 0.5 + e]
    m2 = _lock_chain(H)
    m2[k, 0, 0] = [0.5 - e, 0.5 + e]
    m2[k, 0, 1] = [0.5 + e, 0.5 - e]

    r = np.zeros((H, 2, 2))
    steps = np.arange(1, H + 1)
    r[:, 0, 1] = 0.5 + e * (0.5 - steps / (4 * H))
    r[H - 1, 0, :] = 1.0
    if terminal_a2_reward == "zeroed":
        r[k, 0, 1] = 0.0

    mdps = [TabularMDP(P, r, 0, LowRankFactorization.one_hot(P)) for P in (sim, m1, m2)]
    return InstanceBundle(
        mdps[0], (mdps[1], mdps[2]), e, "combination-lock-pair",
        {"H": H, "eps": e, "variant": terminal_a2_reward}, ("M1", "M2"),
    )


def make_didactic_f1(H: int) -> InstanceBundle:
    """Didactic lock: the last-step transition of a1 is flipped between sim and real."""
    if H <= 2:
        raise ConfigurationError(f"didactic lock needs H > 2, got {H}")
    k = H - 2
    sim = _lock_chain(H)
    sim[k, 0, 0] = [0.25, 0.75]
    real = _lock_chain(H)
    real[k, 0, 0] = [0.75, 0.25]
    r = np.zeros((H, 2, 2))
    steps = np.arange(1, H + 1)
    r[:, 0, 1] = 1 / 8 - steps / (8 * H)
    r[H - 1, 0, :] = 1 / 5
    mdps = [TabularMDP(P, r, 0, LowRankFactorization.one_hot(P)) for P in (sim, real)]
    return InstanceBundle(mdps[0], (mdps[1],), 0.5, "didactic-lock", {"H": H}, ("real",))


def _d2_parts(eps: float, literal: bool = False):
    """Features and measures of the d=2 counterexample (sim, M1, M2)."""
    e = eps
    phi_sim = np.zeros((2, 4, 2))
    phi_sim[:, 0] = [1.0, 0.0]
    phi_sim[:, 1:] = [0.0, 1.0]
    mu_sim = np.array([[1.0, 0.0], [0.5, 0.5]])  # [d, S]: columns are mu(s1), mu(s2)

    def real_phi(flip: bool):
        phi = np.zeros((2, 4, 2))
        phi[:, 0] = [1.0, 0.0]
        phi[:, 1:] = [0.5, 0.5]
        phi[:, 2 if flip else 1] = [0.5 - e, 0.5 + e]
        return phi

    mu_real = np.eye(2)
    return phi_sim, mu_sim, real_phi(False), real_phi(True), mu_real


def make_rand_exp_counterexample(eps_sim: float) -> InstanceBundle:
    """Two-state, four-action, two-step linear MDPs in d=2.

    Real instances differ only on a2 and a3, so any policy supported on
    {a1, a4} cannot tell them apart. The features are state-independent, so
    the step-2 kernel equals the step-1 kernel (no absorbing s2 is
    representable); with H=2 this is irrelevant to returns.
    """
    if not 0 < eps_sim <= 0.5:
        raise ConfigurationError(f"eps_sim must lie in (0, 1/2], got {eps_sim}")
    phi_sim, mu_sim, phi_m1, phi_m2, mu_real = _d2_parts(float(eps_sim))
    H = 2
    r = np.zeros((H, 2, 4))
    r[1, 1, :] = 1.0
    out = []
    for phi, mu in ((phi_sim, mu_sim), (phi_m1, mu_real), (phi_m2, mu_real)):
        fac = LowRankFactorization(phi, np.stack([mu] * H))
        out.append(TabularMDP(fac.kernel(), r, 0, fac))
    return InstanceBundle(
        out[0], (out[1], out[2]), float(eps_sim), "rand-exp-counterexample",
        {"eps": float(eps_sim)}, ("M1", "M2"),
    )


def literal_d2_real(eps_sim: float) -> TabularMDP:
    """M1 with the printed ``1 + eps`` / ``1 - eps`` entries; fails validation by design."""
    bundle = make_rand_exp_counterexample(eps_sim)
    P = np.array(bundle.reals[0].transitions)
    P[0, 0, 1] = [1 - eps_sim, 1 + eps_sim]
    return TabularMDP(P, bundle.reals[0].rewards, 0, None, validate=False)


def make_random_lowrank(S: int, A: int, H: int, d: int, eps_sim: float, seed: int,
                        max_tries: int = 10) -> InstanceBundle:
    """Random rank-d sim and a TV-perturbed real.

    ``phi`` rows lie on the probability simplex and every ``mu_h`` row is a
    distribution, so the kernel is valid and the norm bounds hold. The real
    kernel is ``(1 - eps) P + eps q`` for a random kernel ``q``; the declared
    gap is the realized ``tv_gap``.
    """
    if min(S, A, H, d) < 1 or d > S * A:
        raise ConfigurationError(f"need positive sizes and d <= S*A, got S={S}, A={A}, H={H}, d={d}")
    if not 0 <= eps_sim <= 1:
        raise ConfigurationError(f"eps_sim must lie in [0, 1], got {eps_sim}")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        phi = rng.dirichlet(np.ones(d), size=(S, A))
        mu = rng.dirichlet(np.ones(S), size=(H, d))
        fac = LowRankFactorization(phi, mu)
        P = fac.kernel()
        P = P / P.sum(-1, keepdims=True)
        r = rng.random((H, S, A))
        q = rng.dirichlet(np.ones(S), size=(H, S, A))
        if eps_sim == 0:
            P_real = P
        else:
            P_real = (1 - eps_sim) * P + eps_sim * q
            P_real = P_real / P_real.sum(-1, keepdims=True)
        if mdp_issues(P, r, 0, fac) or mdp_issues(P_real, r, 0):
            continue
        sim = TabularMDP(P, r, 0, fac)
        real = TabularMDP(P_real, r, 0)
        gap, _ = tv_gap(sim, real)
        return InstanceBundle(
            sim, (real,), gap, "random-lowrank",
            {"S": S, "A": A, "H": H, "d": d, "eps": eps_sim, "seed": seed}, ("real",),
        )
    raise GenerationError(f"no valid random instance after {max_tries} attempts (seed={seed})")


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    problems: tuple

    def __str__(self):
        if self.passed:
            return "PASS"
        return "FAIL\n" + "\n".join(f"  - {p}" for p in self.problems)


def validate_instance(bundle) -> ValidationReport:
    """Check every MDP invariant and the bundle's declared gap. Never raises on content."""
    problems: list[str] = []
    if isinstance(bundle, TabularMDP):
        named = {"mdp": bundle}
        declared, sim = None, None
    else:
        named = {"sim": bundle.sim, **bundle.named_reals()}
        declared, sim = bundle.eps_sim, bundle.sim
    for name, mdp in named.items():
        for issue in mdp_issues(mdp.transitions, mdp.rewards, mdp.init_state, mdp.factorization):
            problems.append(f"{name}: {issue}")
    if sim is not None:
        for name, real in bundle.named_reals().items():
            try:
                gap, loc = tv_gap(sim, real)
            except ConfigurationError as exc:
                problems.append(f"{name}: {exc}")
                continue
            if gap > declared + 1e-12:
                problems.append(f"{name}: tv_gap {gap:.12g} at (h,s,a)={loc} exceeds declared {declared:.12g}")
    return ValidationReport(not problems, tuple(problems))


_SPEC_KEYS = {
    "d1": {"H": int, "eps": float, "variant": str},
    "f1": {"H": int},
    "d2": {"eps": float},
    "rand": {"S": int, "A": int, "H": int, "d": int, "eps": float, "seed": int},
}
_SPEC_DEFAULTS = {
    "d1": {"H": 12, "eps": 0.125, "variant": "as_written"},
    "f1": {"H": 10},
    "d2": {"eps": 0.25},
    "rand": {"S": 6, "A": 3, "H": 8, "d": 4, "eps": 0.05, "seed": 0},
}


def _number(kind, text: str):
    if kind is float:
        return float(Fraction(text))
    if kind is int:
        return int(text)
    return text


def parse_instance_spec(spec: str) -> tuple[str, dict]:
    """``"d1:H=12,eps=0.125"`` -> ``("d1", {"H": 12, "eps": 0.125, "variant": "as_written"})``."""
    name, _, rest = spec.strip().partition(":")
    if name not in _SPEC_KEYS:
        raise ConfigurationError(f"unknown instance {name!r}; expected one of {sorted(_SPEC_KEYS)}")
    params = dict(_SPEC_DEFAULTS[name])
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq or key not in _SPEC_KEYS[name]:
            raise ConfigurationError(f"bad parameter {item!r} for instance {name!r}")
        try:
            params[key] = _number(_SPEC_KEYS[name][key], val)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigurationError(f"bad value in {item!r}: {exc}") from None
    return name, params


def build_instance(spec: str) -> InstanceBundle:
    name, p = parse_instance_spec(spec)
    if name == "d1":
        return make_comb_lock_d1(p["H"], p["eps"], p["variant"])
    if name == "f1":
        return make_didactic_f1(p["H"])
    if name == "d2":
        return make_rand_exp_counterexample(p["eps"])
    return make_random_lowrank(p["S"], p["A"], p["H"], p["d"], p["eps"], p["seed"])
