import numpy as np
import pytest

from ticert.chain import FiniteMetricSpace, ReversibleChain
from ticert.fixtures import FIXTURES, load_fixture, random_reversible_chain

# filled by tests/test_acceptance.py, printed once at the end of the run
ACCEPTANCE = {}


def record(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def two_point_chain(a=1.0, b=1.0):
    """Q = [[-a, a], [b, -b]] on the discrete two-point space."""
    q = np.array([[-a, a], [b, -b]])
    return ReversibleChain.from_rates(q, FiniteMetricSpace.discrete(["0", "1"]))


@pytest.fixture
def two_state():
    return load_fixture("two_state")


@pytest.fixture
def birth_death():
    return load_fixture("birth_death3")


@pytest.fixture
def cycle():
    return load_fixture("cycle4")


@pytest.fixture(params=FIXTURES)
def fixture_chain(request):
    return load_fixture(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_chains():
    rng = np.random.default_rng(7)
    return [random_reversible_chain(rng, int(rng.integers(2, 7))) for _ in range(20)]
