import json
from importlib import resources

import numpy as np
import pytest

from tailrisk.dist import Gaussian
from tailrisk.loss import DecisionConstraint, LinearPortfolio


@pytest.fixture(scope="session")
def portfolio2():
    doc = json.loads((resources.files("tailrisk") / "data" / "portfolio2.json").read_text())
    d = doc["distribution"]
    return {
        "dist": Gaussian(d["mean"], d["cov"]),
        "loss": LinearPortfolio(doc["loss"]["dim"]),
        "constraint": DecisionConstraint(doc["constraint"]["mu"], doc["constraint"]["target"]),
        "beta": doc["beta"],
        "oracle": doc["grid_oracle"],
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def pytest_configure(config):
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    # a failure in any phase fails the criterion
    prev = item.config._criteria.get(number, (title, True, 0.0))
    ok = prev[1] and not rep.failed
    item.config._criteria[number] = (title, ok, prev[2] + rep.duration)


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_criteria", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, ok, secs = results[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title} ({secs:.1f} s)")
