import pytest

from fcms.core import ModelParams

ACCEPTANCE_LINES = []


@pytest.fixture
def baseline():
    return ModelParams(beta=0.5, gamma=0.1, eta=0.01)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
