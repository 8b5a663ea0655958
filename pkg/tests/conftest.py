import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from drstaff import model

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def tiny_instance(J=2, pools=((0, 1),), d_hi=6, w_hi=4, y_hi=3, rate=0.9, pool_rate=1.0,
                  costs=model.CostParams(100.0, 130.0, 400.0, 50.0), mean=3.0, var=2.0):
    """Small instance with narrow bounds for exhaustive checks."""
    units = tuple(model.UnitSpec((mean, mean * mean + var), (0, d_hi), (0, w_hi),
                                 model.AttendanceFunction.linear(rate, 0, w_hi)) for _ in range(J))
    pl = tuple(model.PoolSpec(tuple(m), (0, y_hi), model.AttendanceFunction.linear(pool_rate, 0, y_hi))
               for m in pools)
    return model.Instance(units, pl, costs)


@pytest.fixture(scope="session")
def fixture_instance():
    return model.load_fixture()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
