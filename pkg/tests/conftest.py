import numpy as np
import pytest

from robustcover.network import random_network, ramp_margin
from robustcover.rng import as_key


@pytest.fixture
def small_net():
    return random_network([2, 6, 3], as_key(11))


@pytest.fixture
def ramp():
    return ramp_margin(0.5)


@pytest.fixture
def gen():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
