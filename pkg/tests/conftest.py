import numpy as np
import pytest

from mbqcnn import cli
from mbqcnn import physics as P

ACCEPTANCE_LINES = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def iris_records():
    return cli.load_iris()


@pytest.fixture(scope="session")
def haldane_sets():
    train = P.make_grid_dataset(3, 6)
    test = P.make_test_grid(3, 6, seed=0)
    return cli.haldane_dataset(train), cli.haldane_dataset(test)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
