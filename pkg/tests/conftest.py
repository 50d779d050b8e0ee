from __future__ import annotations

import re

import pytest

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = re.match(r"test_criterion_(\d+)", item.name)
    if m is None:
        return
    num = int(m.group(1))
    doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
    if report.when == "call" or (report.when == "setup" and report.failed):
        # a parametrized criterion passes only if every case passes
        failed = report.failed or _CRITERIA.get(num, ("PASS",))[0] == "FAIL"
        _CRITERIA[num] = ("FAIL" if failed else "PASS", doc)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, doc = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {doc}")
