import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from moistns.grid import Grid
from moistns.params import PhysParams

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def params():
    return PhysParams()


@pytest.fixture
def grid8():
    return Grid.cube(8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_state(grid, *, amp=0.1, seed=0):
    """Admissible smooth state with every field non-constant."""
    from moistns.dynamics import State, bump_fields, velocity_shape

    b = bump_fields(grid)
    r = np.random.default_rng(seed).uniform(0.5, 1.0, 6)
    return State(
        grid,
        rho_d=1.0 + amp * r[0] * b["rho_d"],
        u=amp * r[1] * velocity_shape(grid),
        T=1.0 + amp * r[2] * b["T"],
        q_v=amp * r[3] * b["q_v"],
        q_c=1.0 + amp * r[4] * b["q_c"],
        q_r=amp * r[5] * b["q_r"],
    )


#: one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
