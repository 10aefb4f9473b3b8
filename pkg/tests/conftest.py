"""Shared fixtures and the acceptance-summary terminal hook.

Tests in test_acceptance.py carry a ``criterion(number, title)`` marker.
After the run we print one PASS/FAIL line per criterion so the overall
verdict is readable without scrolling through the full pytest output.
"""
from __future__ import annotations

import numpy as np
import pytest

from tunekit import SearchSpace, continuous


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(number, title): top-level acceptance criterion identity",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report._criterion = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results: dict[int, tuple[str, bool]] = {}
    for reports in terminalreporter.stats.values():
        for report in reports:
            crit = getattr(report, "_criterion", None)
            if crit is None or getattr(report, "when", None) != "call":
                continue
            number, title = crit
            ok = report.outcome == "passed"
            prev = results.get(number)
            results[number] = (title, ok if prev is None else prev[1] and ok)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, ok = results[number]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} [{verdict}] {title}")


@pytest.fixture
def branin_space() -> SearchSpace:
    return SearchSpace(
        [continuous("x1", -5.0, 10.0), continuous("x2", 0.0, 15.0)]
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
