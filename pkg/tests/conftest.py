import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eu_kit import Dimensions, ExpectedUtility, builtin_family, make_weights

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []

FAMILIES = ("log-additive", "crra", "sqrt-additive", "log-of-sum", "linear", "linear-plus-log")


def ramp_weights(S):
    r = np.arange(1, S + 1, dtype=float)
    return make_weights(r / r.sum())


def assemble(name, C, S, weights=None):
    u = builtin_family(name, (), C)
    w = weights if weights is not None else ramp_weights(S)
    return u, ExpectedUtility(u, w, Dimensions(C, S))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
