import os
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from avi import problems
from avi.mesh import load_mesh

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")

REFERENCE_TRIANGLE = """\
dim 2 1
nodes 3
0 0
1 0
0 1
elements 1
0 1 2
"""


@pytest.fixture
def ref_triangle():
    return load_mesh(REFERENCE_TRIANGLE)


@pytest.fixture
def quadratic():
    return problems.quadratic_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_stability_warning():
    # the two-element demo problem runs above the heuristic CFL ceiling by design
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="T_theta=.*stability ceiling")
        yield


# one PASS/FAIL line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
