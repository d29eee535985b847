import math

import numpy as np
import pytest

from sps_lab.fields import CartesianField, CartesianGrid, RadialField, RadialGrid
from sps_lab.groundstate import ground_state

P = 8.0 / 3.0


@pytest.fixture(scope="session")
def gs():
    return ground_state(P)


@pytest.fixture(scope="session")
def ell(gs):
    return gs.length_scale


def gaussian_radial(grid: RadialGrid, omega: float = 1.0) -> RadialField:
    """Unit-mass Gaussian ``(omega/pi)^{3/4} exp(-omega r^2 / 2)``."""
    r = grid.nodes
    return RadialField(grid, (omega / math.pi) ** 0.75 * np.exp(-0.5 * omega * r * r))


def gaussian_cartesian(grid: CartesianGrid, center=(0.0, 0.0, 0.0), omega: float = 1.0) -> CartesianField:
    X, Y, Z = grid.coords()
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2
    vals = (omega / math.pi) ** 0.75 * np.exp(-0.5 * omega * r2)
    return CartesianField(grid, np.broadcast_to(vals, (grid.m,) * 3))


# one line per acceptance criterion, echoed after the test run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
