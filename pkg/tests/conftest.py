import functools

import pytest

from conleykit.config import load_scenario
from conleykit.pipeline import Scenario

ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def scenario(name: str) -> Scenario:
    """One shared pipeline per catalog scenario; stages cache their results."""
    return Scenario(load_scenario(name))


@pytest.fixture(scope="session")
def get_scenario():
    return scenario


@pytest.fixture(scope="session")
def repeller():
    return scenario("repeller")


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
