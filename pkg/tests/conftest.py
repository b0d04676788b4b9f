"""Shared fixtures and the acceptance summary printed after the run."""

import re

import numpy as np
import pytest

_acceptance: dict[int, tuple[str, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        prev = _acceptance.get(n, ("PASS", ""))[0]
        outcome = "PASS" if report.outcome == "passed" and prev == "PASS" else "FAIL"
        _acceptance[n] = (outcome, m.group(2).replace("_", " "))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        outcome, name = _acceptance[n]
        terminalreporter.write_line(f"criterion {n:2d} [{outcome}] {name}")
