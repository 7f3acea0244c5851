import numpy as np
import pytest

from bdd import geometry as geo
from bdd.data import frame_from_arrays


@pytest.fixture
def L_boundary():
    # first quadrant treated
    return geo.Boundary(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]), treated_side="right")


@pytest.fixture
def unit_segment():
    return geo.Boundary(np.array([[0.0, 0.0], [1.0, 0.0]]))


@pytest.fixture
def line_boundary():
    return geo.Boundary(np.array([[-1.0, 0.0], [1.0, 0.0]]), treated_side="left")


def make_frame(boundary, n=2000, seed=0, noise=0.3, partition=None, f=None):
    """Uniform scores on [-1, 1]^2 with a smooth default outcome surface."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, 2))
    t = (geo.signed_distances(boundary, x) >= 0).astype(float)
    if f is None:
        y = 1 + x[:, 0] - 0.5 * x[:, 1] + 0.4 * x[:, 1] ** 2 + t * (1 - 0.5 * x[:, 0])
    else:
        y = f(x, t)
    y = y + noise * rng.standard_normal(n)
    return frame_from_arrays(y, x, boundary, partition)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[k])
