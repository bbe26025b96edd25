import sys

import numpy as np
import pytest

from quantdim.dyadic import build_measure, preset


@pytest.fixture(scope="session")
def menger10():
    return build_measure(preset("menger"), 10)


@pytest.fixture(scope="session")
def uniform10():
    return build_measure(preset("uniform"), 10)


@pytest.fixture(scope="session")
def ucascade10():
    return build_measure(preset("uniform-cascade"), 10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
