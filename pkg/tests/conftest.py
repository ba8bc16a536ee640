import numpy as np
import pytest

from qlpdae.plasma import plasma_model

# pass/fail lines collected by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def plasma():
    return plasma_model()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
