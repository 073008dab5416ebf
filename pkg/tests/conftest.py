import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from epp import bellmat as bm

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# lines recorded by the acceptance module, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_state(rng, n_r=4):
    """Random Bell-basis state of rank <= n_r."""
    d = rng.standard_normal((4, n_r)) + 1j * rng.standard_normal((4, n_r))
    r = d @ d.conj().T
    return bm.bell_from_computational(r / np.trace(r).real)


def random_x_state(rng, n_r=4):
    r = random_state(rng, n_r)
    r[~bm.X_MASK] = 0
    return r / np.trace(r).real


@st.composite
def states(draw, x_only=False):
    seed = draw(st.integers(0, 2**32 - 1))
    n_r = draw(st.integers(1, 4))
    rng = np.random.default_rng(seed)
    return random_x_state(rng, n_r) if x_only else random_state(rng, n_r)
