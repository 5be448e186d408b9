import numpy as np
import pytest

from sbvar.model import NoiseSpec, PiecewiseVarSpec, one_off_diagonal, simulate


def small_spec(T=60, p=3, breaks=(30,), values=(-0.5, 0.6)):
    blocks = [one_off_diagonal(p, v) for v in values]
    return PiecewiseVarSpec(T, p, 1, list(breaks), blocks, NoiseSpec("diagonal", 0.01))


@pytest.fixture
def small_series():
    return simulate(small_spec(), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
