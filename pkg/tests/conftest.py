import numpy as np
import pytest

from adaptive_fov.scenario import ScenarioConfig, _states, build_plant


@pytest.fixture(scope="session")
def default_cfg():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def plant(default_cfg):
    """Default two-robot setup with seed-1 perturbed true parameters."""
    return build_plant(default_cfg, np.random.default_rng(default_cfg.seed))


@pytest.fixture(scope="session")
def states0(plant):
    """FK of both robots at the start configuration under the nominal model."""
    return _states(plant.models, plant.q0, plant.a_nominal)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
