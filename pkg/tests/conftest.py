import numpy as np
import pytest
from hypothesis import settings

from dnlsgauge.spectral import SpectralField

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_field(N, rng, batch=(), decay=1.0, scale=1.0):
    """Random coefficients with variance ~ scale^2 / (1 + n^2)^decay."""
    n = np.arange(-N, N + 1)
    sd = scale / (1.0 + n**2) ** (decay / 2)
    z = rng.standard_normal(batch + (2 * N + 1,)) + 1j * rng.standard_normal(batch + (2 * N + 1,))
    return SpectralField(z * sd / np.sqrt(2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = {}


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
