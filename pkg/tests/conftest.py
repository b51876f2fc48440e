import numpy as np
import pytest

from trialsearch.core import Context, Dataset, ProblemSpec, Trajectory
from trialsearch.dgp import DgpParams, build_instance, build_toy, generate_observational


@pytest.fixture
def example1():
    return build_toy("example1")


@pytest.fixture
def a6():
    return build_toy("a6", 0.1)


@pytest.fixture(scope="session")
def small_instance():
    return build_instance(DgpParams(k=3, n_y=3, d=2, v=1, seed=11))


@pytest.fixture(scope="session")
def small_data(small_instance):
    return generate_observational(small_instance, 400)


@pytest.fixture
def tiny_spec():
    return ProblemSpec(3, (0.0, 1.0, 2.0), (2,))


@pytest.fixture
def tiny_data(tiny_spec):
    c0, c1 = Context((0,)), Context((1,))
    trajs = [
        Trajectory(c0, ((0, 2),)),
        Trajectory(c0, ((1, 0), (0, 1))),
        Trajectory(c0, ((1, 0), (2, 2))),
        Trajectory(c1, ((2, 1), (1, 1), (0, 0))),
        Trajectory(c1, ((0, 0),), terminal=False),
    ]
    return Dataset(tiny_spec, trajectories=trajs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
