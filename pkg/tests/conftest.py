"""Collects outcomes of ``@pytest.mark.acceptance(number, title)`` tests.

A criterion passes when every test carrying its number passes. The terminal
summary prints one PASS/FAIL line per criterion, followed by the measured
values each test attached with ``record_property("detail", ...)``.
"""

import pytest

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = marker.args
        entry = _CRITERIA.setdefault(number, {"title": title, "results": []})
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        if report.skipped:
            status = "skipped"
        else:
            status = "passed" if report.passed else "failed"
        entry["results"].append((item.name, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        ok = all(status == "passed" for _, status, _ in entry["results"])
        tr.write_line(f"{'PASS' if ok else 'FAIL'} {number:2d}. {entry['title']}")
        for name, status, detail in entry["results"]:
            mark = {"passed": "ok", "failed": "XX", "skipped": "--"}[status]
            tr.write_line(f"       [{mark}] {name}" + (f": {detail}" if detail else ""))
