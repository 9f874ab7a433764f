import time

import numpy as np
import pytest

from mpctune.config import desk_fixture
from mpctune.objective import grid_evaluate

ACCEPTANCE_LINES = []

GRID_KNOTS = np.linspace(0.0, 0.5, 9)


def record_acceptance(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk():
    """One week of the packaged desk plant at a 24 h horizon, 10% load noise."""
    return desk_fixture()


@pytest.fixture(scope="session")
def desk_grid(desk):
    setup, series = desk
    t0 = time.perf_counter()
    grid = grid_evaluate(setup.plant, series, (GRID_KNOTS, GRID_KNOTS), setup.span_hours,
                         soc_init=setup.soc_init)
    grid.provenance["build_seconds"] = time.perf_counter() - t0
    return grid
