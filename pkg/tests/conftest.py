import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def random_spd(rng, m, jitter=0.5):
    A = rng.standard_normal((m, m))
    return A @ A.T / m + jitter * np.eye(m)


def ar1(m, rho, scale=1.0):
    i = np.arange(m)
    return scale * rho ** np.abs(i[:, None] - i[None, :])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
