from fractions import Fraction

import pytest

from lindstedt.lattice import ClusterIndex
from lindstedt.smalldiv import FrequencyContext


@pytest.fixture
def exact_ctx():
    return FrequencyContext(D=2, s=1, mu=Fraction(987, 1597), eps=Fraction(1, 100))


@pytest.fixture
def float_ctx():
    return FrequencyContext(D=2, s=1.0, mu=987 / 1597, eps=0.01, gamma=0.005, gamma0=0.01,
                            eps0=0.1)


@pytest.fixture(scope="session")
def plane_clusters():
    return ClusterIndex(2)


@pytest.fixture(scope="session")
def stress_exact():
    from lindstedt.cli import stress_setup

    return stress_setup(exact=True)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
