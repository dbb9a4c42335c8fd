import numpy as np
import pytest

from qha.fields import Grid1D

TWO_PI = 2.0 * np.pi


@pytest.fixture
def grid():
    return Grid1D(-12.0, 12.0, 1024)


@pytest.fixture
def fine_grid():
    return Grid1D(-10.0, 10.0, 2049)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
