import numpy as np
import pytest

from surfdmk.dmk import DmkConfig, run
from surfdmk.mesh import build_nested_pair, refine, tetrahedron
from surfdmk.sphere import sphere_problem


@pytest.fixture(scope="session")
def tet_pair():
    """Tetrahedron refined once (coarse) plus its in-plane refinement (fine)."""
    coarse, _ = refine(tetrahedron())
    return build_nested_pair(coarse)


@pytest.fixture(scope="session")
def level0():
    return sphere_problem(0)


@pytest.fixture(scope="session")
def level1():
    return sphere_problem(1)


@pytest.fixture(scope="session")
def level0_result(level0):
    return run(level0.pair, level0.b, DmkConfig())


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


#: Pass/fail lines collected by test_acceptance and repeated after the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
