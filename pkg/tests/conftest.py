import numpy as np
import pytest

from ofdmwin import OfdmConfig

# acceptance results, printed as one line per criterion at the end of the run
ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append((number, f"[{status}] criterion {number}: {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
        terminalreporter.write_line(line)


@pytest.fixture
def cfg():
    return OfdmConfig.ieee80211g("QAM64")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_grids(rng, n, m):
    return (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2)


def random_bits(rng, n):
    return rng.integers(0, 2, n, dtype=np.uint8)
