import numpy as np
import pytest

from pdmm.model import make_random_operator, random_signal, sample_measurements


def random_instance(seed, n=60, k=4, b=0.1, photon_scale=1.0):
    """Dense random problem with its ground-truth signal."""
    rng = np.random.default_rng(seed)
    op = make_random_operator(n, k, rng)
    x = random_signal(k, rng)
    problem = sample_measurements(op, x, b, rng, photon_scale)
    return problem, x


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
