import sys

import numpy as np
import pytest

from carnotlift.algebra import builtin


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["heisenberg:1", "heisenberg:2", "filiform:3", "quaternionic-heisenberg:1"])
def builtin_algebra(request):
    return builtin(request.param)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        for line in mod.RESULTS[n].splitlines():
            terminalreporter.write_line(line)
