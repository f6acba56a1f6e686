import sys

import numpy as np
import pytest

from foldkit.mmo import SimConfig, simulate
from foldkit.reduced import ReducedSystem
from foldkit.system import Params, fhn_system
from foldkit.transcritical import detect_fsn2, verify_fhn_hypotheses

BASE = Params()  # epsilon 0.1, all couplings 0.01, c2 -1.5
REGIMES = {"equilibrium": -0.99, "small_cycle": -0.9883, "mmo": -0.988295}


@pytest.fixture(scope="session")
def fhn():
    return fhn_system()


@pytest.fixture(scope="session")
def base():
    return BASE


@pytest.fixture(scope="session")
def rs():
    return ReducedSystem(BASE)


@pytest.fixture(scope="session")
def fsn2_report(rs):
    report = detect_fsn2(BASE, (-1.0, -0.98), rs=rs)
    return verify_fhn_hypotheses(BASE, report, rs=rs)


@pytest.fixture(scope="session")
def regime_runs():
    """The three regime runs at dt 0.001 over [0, 500]."""
    return {k: simulate(SimConfig(BASE.replace(c1=c1))) for k, c1 in REGIMES.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
