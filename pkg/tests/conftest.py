from __future__ import annotations

import pytest

from helmlab.cavity import RectCavity
from helmlab.solver import DEFAULT_EPS_LIST, ModeTruncation, ResonatorGeometry, find_resonance, sweep

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def unit_geometry():
    return ResonatorGeometry(RectCavity(1.0, 1.0), 1.0, 0.3)


@pytest.fixture(scope="session")
def resonance_03(unit_geometry):
    """Default-truncation resonance at eps = 0.3 (three Richardson levels)."""
    return find_resonance(unit_geometry, ModeTruncation())


@pytest.fixture(scope="session")
def default_sweep(unit_geometry):
    import time

    t0 = time.time()
    records = sweep(unit_geometry, DEFAULT_EPS_LIST, ModeTruncation())
    return records, time.time() - t0


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
