import numpy as np
import pytest

from se3koopman.dynamics import QuadrotorParams, QuadrotorState
from se3koopman.linalg import rotation_exp

_CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records and prints one pass/fail line."""
    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
        print(line)
        _CRITERIA.append(line)
        return ok
    return record


@pytest.fixture
def params():
    return QuadrotorParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(rng, w=0.5, v=0.5, p=2.0):
    return QuadrotorState(rotation_exp(rng.uniform(-np.pi, np.pi, 3)), rng.uniform(-p, p, 3),
                          rng.uniform(-w, w, 3), rng.uniform(-v, v, 3))


@pytest.fixture
def state(rng):
    return random_state(rng)
