import os

import numpy as np
import pytest
from hypothesis import settings

from apmcf.ambient import AmbientMetric

settings.register_profile("apmcf", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("apmcf")

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIOS = os.path.join(ROOT, "scenarios")


def all_ambients():
    """One representative per ambient kind, with surfaces of radius ``r`` that fit."""
    return [
        ("euclidean", AmbientMetric.euclidean(), 1.0),
        ("sphere", AmbientMetric.sphere(), 0.6),
        ("hyperbolic", AmbientMetric.hyperbolic(), 0.5),
        ("schwarzschild", AmbientMetric.schwarzschild(1.0), 10.0),
        ("schwarzschild_p", AmbientMetric.schwarzschild(1.0, beta=0.1, r_cut=2.0), 10.0),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance criteria report ---------------------------------------------------

CRITERIA = {
    1: "exact integral identities",
    2: "stationarity of constant-H spheres",
    3: "conservation laws",
    4: "exponential decay of |A°|",
    5: "convergence to a round sphere",
    6: "Schwarzschild CMC surface",
    7: "Schwarzschild exponential rate",
    8: "evolution-equation consistency",
    9: "grid and time convergence orders",
    10: "perturbed-metric robustness",
}
_criterion_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    if hasattr(rep, "wasxfail"):
        status = "xfail"
    elif rep.failed:
        status = "fail"
    elif rep.skipped:
        status = "skip"
    else:
        status = "pass"
    _criterion_outcomes.setdefault(mark.args[0], []).append(status)


def pytest_terminal_summary(terminalreporter):
    if not _criterion_outcomes:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(CRITERIA):
        got = _criterion_outcomes.get(n)
        if not got:
            continue
        if "fail" in got:
            line = "FAIL"
        elif "xfail" in got:
            line = f"FAIL (known, {got.count('xfail')} strict xfail)"
        elif "skip" in got:
            line = "NOT RUN"
        else:
            line = "PASS"
        terminalreporter.write_line(f"criterion {n:2d}  {line:28s} {CRITERIA[n]} ({len(got)} checks)")
