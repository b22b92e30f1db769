import numpy as np
import pytest

from invkit.expr import ScalarField
from invkit.inclusion import ControlSet, DisturbanceMap, ProductInclusion
from invkit.intervals import IntervalUnion
from invkit.scenario import load_scenario


def constant_inclusion(values, factors=None, controls=None, h3=None, h4=None):
    """Product inclusion with state-independent disturbance sets."""
    n = len(values)
    controls = controls or ControlSet.none()
    factors = factors or ["1"] * n
    gs = tuple(ScalarField.parse(f, n, controls.m) for f in factors)
    ds = tuple(DisturbanceMap.constant(IntervalUnion(v), h3=h3, h4=h4) for v in values)
    return ProductInclusion(n, gs, ds, controls)


@pytest.fixture(scope="session")
def ex21():
    return load_scenario("ex2_1")


@pytest.fixture(scope="session")
def zero_one():
    return load_scenario("zero_one")


@pytest.fixture
def zero_dynamics():
    return constant_inclusion([[(0, 0)]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" in report.nodeid and report.when == "call":
        num = int(report.nodeid.split("test_criterion_")[1][:2])
        _ACCEPTANCE[num] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        status = "PASS" if _ACCEPTANCE[num] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {status}")
