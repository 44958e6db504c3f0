"""Shared fixtures: small models, sensor systems, and greedy bases.

Expensive objects are session-scoped; every test treats them as
immutable, matching the package's own concurrency contract.
"""

import numpy as np
import pytest

from pbdw.greedy import tensor_grid_training, weak_greedy
from pbdw.model import ModelConfig, build_model
from pbdw.sensing import build_system, equispaced_average_sensors

# PASS/FAIL lines collected by the acceptance tests, replayed after the
# run so they survive pytest's output capture
CRITERION_LINES = []


def record_criterion(number, passed, detail):
    line = "CRITERION %2d %s: %s" % (number, "PASS" if passed else "FAIL",
                                     detail)
    CRITERION_LINES.append(line)
    print(line)
    assert passed, line


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.write_line("")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def model_1d2():
    return build_model(ModelConfig(d_y=2))


@pytest.fixture(scope="session")
def system_1d2(model_1d2):
    return build_system(model_1d2, equispaced_average_sensors(4, width=0.125))


@pytest.fixture(scope="session")
def model_d4():
    return build_model(ModelConfig())


@pytest.fixture(scope="session")
def system_d4(model_d4):
    return build_system(model_d4, equispaced_average_sensors(5, width=0.1))


@pytest.fixture(scope="session")
def greedy_1d2(model_1d2):
    # exact over the 81-point training grid; enough columns for prefixes
    return weak_greedy(model_1d2, tensor_grid_training(2, 9), n_max=3)


@pytest.fixture(scope="session")
def greedy_d4(model_d4):
    return weak_greedy(model_d4, tensor_grid_training(4, 5), n_max=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
