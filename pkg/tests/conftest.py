import time

import numpy as np
import pytest

from raylength.sceneio import reference_scene
from raylength.trapscan import boundary_bisection, find_trapped_seed, two_sphere_bracket

STAGE_BUDGETS = (10, 20, 40, 80, 160, 320)
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def unit_sphere():
    return reference_scene("unit_sphere")


@pytest.fixture(scope="session")
def two_spheres():
    return reference_scene("two_spheres")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_pair(rng, min_sep=1e-2):
    while True:
        w, t = rng.normal(size=(2, 3))
        w /= np.linalg.norm(w)
        t /= np.linalg.norm(t)
        if np.linalg.norm(w - t) > min_sep:
            return w, t


@pytest.fixture(scope="session")
def trapped_run(two_spheres):
    """Trapped seed and the six-stage bisection sequence, with wall times."""
    t0 = time.perf_counter()
    za, zb, side = two_sphere_bracket(two_spheres)
    seed = find_trapped_seed(two_spheres, za, zb, 2 * max(STAGE_BUDGETS), side=side)
    seq = boundary_bisection(two_spheres, seed.point, za, STAGE_BUDGETS)
    return {"seed": seed, "z_free": za, "sequence": seq, "seconds": time.perf_counter() - t0}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
