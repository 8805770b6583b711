import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import lambdamem.cli  # noqa: E402
import lambdamem.norm  # noqa: E402
import lambdamem.protocols  # noqa: E402
import lambdamem.solver  # noqa: E402
from lambdamem.norm import protocol_matrix  # noqa: E402
from lambdamem.protocols import preset, sweep_pulse_area  # noqa: E402

import numpy as np  # noqa: E402

ACCEPTANCE_LINES = {}
# (closure, d) of every successful solve in the session, in call order
SOLVE_CLOSURES = []

_SOLVE_USERS = (lambdamem.solver, lambdamem.protocols, lambdamem.norm, lambdamem.cli)


@pytest.fixture(scope="session", autouse=True)
def record_closures():
    real = lambdamem.solver.solve

    def recording(memory, *args, **kwargs):
        result = real(memory, *args, **kwargs)
        SOLVE_CLOSURES.append((result.ledger.closure, memory.d))
        return result

    for mod in _SOLVE_USERS:
        mod.solve = recording
    yield
    for mod in _SOLVE_USERS:
        mod.solve = real


@pytest.fixture(scope="session")
def matrix():
    """All nine protocol x regime detuning sweeps at default grids."""
    return protocol_matrix()


@pytest.fixture(scope="session")
def att_area_scan():
    att = preset("ATT")
    return sweep_pulse_area(att.memory, att.control, np.linspace(0.0, 3.0, 31))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES and not SOLVE_CLOSURES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
    if SOLVE_CLOSURES:
        worst = max(c for c, _ in SOLVE_CLOSURES)
        over = sum(c >= 1e-3 for c, _ in SOLVE_CLOSURES)
        terminalreporter.write_line(
            f"ledger over the whole session: {len(SOLVE_CLOSURES)} solves, worst closure {worst:.2e}, "
            f"{over} at or above 1e-3")
