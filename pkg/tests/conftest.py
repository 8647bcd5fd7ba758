"""Shared hypothesis profile and the acceptance verdict board."""

from __future__ import annotations

import time

import pytest
from hypothesis import HealthCheck, settings

# every property runs 1000 cases; derandomized so the suite is repeatable
settings.register_profile(
    "default",
    max_examples=1000,
    deadline=None,
    derandomize=True,
    database=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

VERDICTS: list[tuple[int, bool, str]] = []
INVARIANT_OUTCOMES: dict[str, str] = {}
SESSION_START = time.perf_counter()


def pytest_collection_modifyitems(config, items):
    # acceptance runs last so criterion 11 can see the invariant suites' outcomes
    items.sort(key=lambda item: item.get_closest_marker("acceptance") is not None)


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if "invariant" in report.keywords:
            INVARIANT_OUTCOMES[report.nodeid] = report.outcome


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and print it."""

    def record(criterion: int, ok: bool, detail: str) -> bool:
        VERDICTS.append((criterion, ok, detail))
        print(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
