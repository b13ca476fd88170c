import numpy as np
import pytest

from fbm_slowfast.noise import NoiseSpec

# composites of wavevectors with different |k|, so that b(e, e) != 0
E1 = [{"k": [1, 0], "parity": "sin"}, {"k": [1, 1], "parity": "cos"}]
E2 = [{"k": [0, 1], "parity": "sin"}, {"k": [1, -1], "parity": "cos"}]
E3 = [{"k": [2, 1], "parity": "cos"}]

TWO_MODE = [
    {"components": E1, "sigma": 1.0, "lambda": -1.0},
    {"components": E2, "sigma": 0.8, "lambda": -2.0},
]
THREE_MODE = TWO_MODE + [{"components": E3, "sigma": 0.5, "lambda": -1.5}]
# PASS/FAIL lines of the acceptance suite, repeated in the terminal summary
ACCEPTANCE = []

SHEAR = [
    {"k": [1, 0], "parity": "sin", "sigma": 1.0, "lambda": -1.0},
    {"k": [1, 0], "parity": "cos", "sigma": 1.0, "lambda": -1.0},
]


def make_spec(entries, hurst=0.7, n=16, complement_lambda=-1.0):
    return NoiseSpec.from_entries(n, entries, hurst, complement_lambda=complement_lambda)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def spec2():
    return make_spec(TWO_MODE)


@pytest.fixture
def spec3():
    return make_spec(THREE_MODE)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria suite")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
