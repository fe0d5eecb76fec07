import os

import numpy as np
import pytest

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def nmes_csv():
    return os.path.join(DATA_DIR, "nmes_like.csv")


@pytest.fixture
def nmes_schema():
    return os.path.join(DATA_DIR, "nmes_schema.json")


# acceptance verdicts, collected by test_acceptance and repeated at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
