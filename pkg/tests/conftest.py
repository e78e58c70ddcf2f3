import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from holopnt import builtin

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("quick", deadline=None, max_examples=5,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HOLOPNT_HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def lam():
    return builtin("lambda")


@pytest.fixture(scope="session")
def tripod():
    return builtin("tripod")


@pytest.fixture(scope="session")
def fcg4():
    return builtin("fcg4")


@pytest.fixture(scope="session")
def kerr2():
    return builtin("kerr2")


@pytest.fixture
def rng():
    return np.random.default_rng(4321)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
