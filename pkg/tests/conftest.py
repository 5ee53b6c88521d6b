import numpy as np
import pytest

from rsep import jets
from rsep.geometry import DiagonalMetric, Domain

CARTESIAN_BOX = Domain((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))


@pytest.fixture
def cartesian():
    return DiagonalMetric.from_expressions(["1", "1", "1"], domain=CARTESIAN_BOX, name="E3")


@pytest.fixture
def spherical():
    box = Domain((0.5, 0.2, -3.0), (4.0, 2.9, 3.0))
    return DiagonalMetric.from_expressions(["1", "1/q1^2", "1/(q1^2*sin(q2)^2)"], domain=box,
                                           name="E3 spherical")


@pytest.fixture(params=jets.available_backends())
def backend(request):
    before = jets.backend()
    jets.use_backend(request.param)
    yield request.param
    jets.use_backend(before)


def central_difference(f, p, i, h=1e-5):
    p = np.asarray(p, dtype=float)
    e = np.zeros_like(p)
    e[i] = h
    return (f(p + e) - f(p - e)) / (2 * h)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
