import numpy as np
import pytest

from qmeter.model import Params


@pytest.fixture
def defaults():
    return Params()


def weak_probe(**kw):
    """Resolved-sideband parameters where back-action is negligible."""
    base = dict(kappa_m=1e-4, kappa_r=0.02, g0_bar_coupling=1e-5, detuning=1.0)
    base.update(kw)
    return Params().replace(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
