import numpy as np
import pytest

from fxmap.effects import layout


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def noise(rng):
    def make(seconds=0.5, level=0.1):
        return level * rng.standard_normal(int(seconds * 44100))

    return make


@pytest.fixture
def theta_neutral():
    return layout.neutral()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in mod.RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
