import numpy as np
import pytest

from upinn import autodiff as ad


@pytest.fixture(autouse=True)
def fresh_graph():
    ad.new_graph()
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
