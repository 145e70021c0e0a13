import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from markov_abstraction import Box, linear_gaussian_1d

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def unit():
    return Box([0.0], [1.0])


@pytest.fixture(scope="session", params=[1.2, 0.8], ids=["a1.2", "a0.8"])
def lingauss(request, unit):
    kernel, init = linear_gaussian_1d(request.param, 0.0, 0.1, 2.4, unit)
    return kernel, init


def uniform_kernel(dim=1):
    """t(s'|s) = 1 on the unit box, zero outside."""
    from markov_abstraction import Kernel

    box = Box(np.zeros(dim), np.ones(dim))

    def density(s_next, s):
        s_next = np.asarray(s_next)
        inside = np.all((s_next >= 0) & (s_next <= 1), axis=-1)
        return np.broadcast_to(np.where(inside, 1.0, 0.0),
                               np.broadcast_shapes(inside.shape, np.asarray(s).shape[:-1])).copy()

    return Kernel(dim=dim, density=density, lambda_f=0.0, m_f=1.0, lambda_b=0.0, m_b=1.0), box


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for i in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[i])
