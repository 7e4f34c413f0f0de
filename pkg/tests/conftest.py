import numpy as np
import pytest

from footnav import simharness as sh
from footnav.deadreckon import TrackerConfig

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def cfg():
    return TrackerConfig()


@pytest.fixture(scope="session")
def staircase():
    """60-step spiral climb with the reference sensor errors."""
    scenario = sh.Scenario(kind="spiral_staircase", n_steps=60)
    truth = sh.gen_trajectory(scenario)
    return scenario, truth, sh.synth_imu(truth, sh.FIXTURE_NOISE)


@pytest.fixture(scope="session")
def staircase_clean():
    scenario = sh.Scenario(kind="spiral_staircase", n_steps=60)
    truth = sh.gen_trajectory(scenario)
    return scenario, truth, sh.synth_imu(truth)


@pytest.fixture(scope="session")
def corridor():
    scenario = sh.Scenario(kind="corridor", length=10.0)
    truth = sh.gen_trajectory(scenario)
    return scenario, truth, sh.synth_imu(truth, sh.FIXTURE_NOISE)


@pytest.fixture(scope="session")
def corridor_clean():
    scenario = sh.Scenario(kind="corridor", length=10.0)
    truth = sh.gen_trajectory(scenario)
    return scenario, truth, sh.synth_imu(truth)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
