import numpy as np
import pytest

from mlmc_ocp.mesh import MeshHierarchy
from mlmc_ocp.ocp import OCPConfig


@pytest.fixture(scope="session")
def hierarchy():
    return MeshHierarchy.build(5)


@pytest.fixture(scope="session")
def paper_cfg():
    return OCPConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
