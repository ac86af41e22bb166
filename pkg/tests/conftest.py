import numpy as np
import pytest

from vcgmpc.bounds import AdmissibilityEnvelope
from vcgmpc.lq_solver import is_stabilizable
from vcgmpc.power_model import DiscretePlant, Partition
from vcgmpc.profiles import TypeProfile, TypeVector
from vcgmpc.scenario import load_scenario

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def scenario():
    return load_scenario("two_area_table1")


@pytest.fixture(scope="session")
def plant(scenario):
    return scenario.plant()


@pytest.fixture(scope="session")
def truth(scenario):
    return scenario.true_types


@pytest.fixture(scope="session")
def envelope(scenario):
    return scenario.envelope()


@pytest.fixture(scope="session")
def x0(scenario):
    return scenario.x0


@pytest.fixture(scope="session")
def case2(truth):
    Q = np.diag([10.0, 1.0, 1000.0, 10.0])
    return truth.replace(TypeVector(0, Q, truth[0].R))


def scalar_plant(a, b=1.0):
    return DiscretePlant(np.array([[a]]), np.array([[b]]))


def scalar_profile(q, r):
    return TypeProfile([TypeVector(0, [[q]], [[r]])])


def random_system(rng, n, m, n_agents=1):
    """Random stabilizable plant with one agent (or ``n_agents`` equal blocks)."""
    while True:
        A = rng.normal(size=(n, n)) / np.sqrt(n)
        B = rng.normal(size=(n, m))
        if is_stabilizable(A, B):
            break
    if n_agents == 1:
        partition = Partition.single(n, m)
    else:
        partition = Partition.uniform(n_agents, n // n_agents, m // n_agents)
    return DiscretePlant(A, B, 1.0, partition)


def random_spd(rng, k, floor=0.1):
    M = rng.normal(size=(k, k))
    return M @ M.T + floor * np.eye(k)


def random_profile(rng, plant):
    p = plant.partition
    return TypeProfile(
        [
            TypeVector(i, random_spd(rng, p.state_size(i)), random_spd(rng, p.input_size(i)))
            for i in range(p.n_agents)
        ]
    )


def diag_envelope(profile, lo=0.5, hi=2.0, delta=0.0):
    return AdmissibilityEnvelope.around(profile, lo, hi, delta)
