import warnings
from importlib.resources import files

import pytest

from smavoids.scenario import load_scenario

SCENARIO_DIR = files("smavoids") / "scenarios"


def packaged(name: str):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return load_scenario(SCENARIO_DIR / f"{name}.yaml")


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
