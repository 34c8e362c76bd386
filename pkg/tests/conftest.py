import numpy as np
import pytest

from cornerwaves.dynamics import PhysicsParams, Simulator, marker_fractions
from cornerwaves.geometry import BottomProfile
from cornerwaves.meshing import MeshSpec

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def acceptance():
    """Record ``(criterion, passed, detail)``; printed in the terminal summary."""

    def record(k: int, passed: bool, detail: str) -> None:
        line = f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[k] = line
        print(line)

    return record


@pytest.fixture(scope="session")
def beach():
    return BottomProfile(np.pi / 12, 2.5, 5.0, 1.0)


@pytest.fixture(scope="session")
def coarse_sim(beach):
    ph = PhysicsParams(sigma=1.0, gravity=1.0, beta_c=0.1, omega_s=np.pi / 12)
    return Simulator(ph, beach, MeshSpec(0.2, grading=4), marker_fractions(41, 2), 8.0, cfl=0.3)


@pytest.fixture(scope="session")
def meniscus_sim(beach):
    """Static angle different from the beach angle, so the rest surface is curved."""
    ph = PhysicsParams(sigma=1.0, gravity=1.0, beta_c=0.1, omega_s=0.35)
    return Simulator(ph, beach, MeshSpec(0.2, grading=4), marker_fractions(41, 2), 8.0)


@pytest.fixture(scope="session")
def meniscus(meniscus_sim):
    from cornerwaves.dynamics import equilibrium_state

    return equilibrium_state(meniscus_sim)
