"""Shared fixtures and the acceptance summary printed after the run."""

import re

import pytest

from graphonforge import verify

_AC_TEST = re.compile(r"test_acceptance\.py::test_(ac\d+)_")
_outcomes: dict[str, list[str]] = {}


@pytest.fixture(scope="session")
def acceptance_results():
    """Every registered check, run once with seed 0."""
    results = verify.run_all(0)
    return {r.id: r for r in results}


def pytest_runtest_logreport(report):
    m = _AC_TEST.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes.setdefault(m.group(1).upper(), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(_outcomes, key=lambda s: int(s[2:])):
        outs = _outcomes[ac]
        status = "PASS" if all(o == "passed" for o in outs) else "FAIL"
        title = verify.REGISTRY[ac].title if ac in verify.REGISTRY else ""
        terminalreporter.write_line(f"{ac} {status}  {title}")
