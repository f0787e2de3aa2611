import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sim2real_lab.instances import (
    make_comb_lock_d1,
    make_didactic_f1,
    make_rand_exp_counterexample,
    make_random_lowrank,
)

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def d1():
    return make_comb_lock_d1(12, 0.125)


@pytest.fixture(scope="session")
def d1_zeroed():
    return make_comb_lock_d1(12, 0.125, "zeroed")


@pytest.fixture(scope="session")
def f1():
    return make_didactic_f1(10)


@pytest.fixture(scope="session")
def d2():
    return make_rand_exp_counterexample(0.25)


@pytest.fixture(scope="session")
def small_bundle():
    return make_random_lowrank(4, 3, 5, 3, 0.1, seed=11)


def random_policy_table(rng, H, S, A):
    return rng.dirichlet(np.ones(A), size=(H, S))


def random_mdp(seed, S=3, A=2, H=3, sparse=False):
    """Random tabular MDP; ``sparse`` makes every transition deterministic."""
    from sim2real_lab.mdp import TabularMDP

    rng = np.random.default_rng(seed)
    if sparse:
        P = np.zeros((H, S, A, S))
        idx = rng.integers(0, S, size=(H, S, A))
        np.put_along_axis(P, idx[..., None], 1.0, axis=-1)
    else:
        P = rng.dirichlet(np.ones(S), size=(H, S, A))
    return TabularMDP(P, rng.random((H, S, A)), int(rng.integers(0, S)))


# --- acceptance report --------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
