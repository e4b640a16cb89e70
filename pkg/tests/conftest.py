from __future__ import annotations

from collections import OrderedDict

import numpy as np
import pytest

from gridinfer.grid import Bus, BusKind, GridNetwork, Line

# criterion number -> [title, outcomes]
_CRITERIA: "OrderedDict[int, list]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            n, title = m.args
            _CRITERIA.setdefault(n, [title, []])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA[m.args[0]][1].append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, results = _CRITERIA[n]
        if not results:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {n:>2}: {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_bus(b: float = -10.0, g: float = 0.0) -> GridNetwork:
    """Slack bus 1 feeding load bus 2 over a single line."""
    return GridNetwork(
        (Bus(1, BusKind.SLACK), Bus(2, BusKind.LOAD)),
        (Line(1, 2, g=g, b=b),),
    )
