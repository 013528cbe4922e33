import numpy as np
import pytest

from slotsync import DetectorParams, ExponentProblem, validate_dmc

CH1_ROWS = [[0.95, 0.05], [0.8, 0.2], [0.2, 0.8]]


@pytest.fixture(scope="session")
def ch1():
    return validate_dmc(CH1_ROWS, 0)


@pytest.fixture(scope="session")
def uniform_p():
    return np.array([0.5, 0.5])


@pytest.fixture(scope="session")
def ch1_problem(ch1, uniform_p):
    def make(rate=0.1, alpha=0.0, beta=0.5):
        return ExponentProblem(ch1, uniform_p, rate, alpha, beta)

    return make


@pytest.fixture
def zero_params():
    return DetectorParams(0.0, 0.0)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    def emit(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
