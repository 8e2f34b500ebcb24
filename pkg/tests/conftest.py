"""Prints one PASS/FAIL line per acceptance criterion at the end of the run.

Acceptance tests attach a human-readable ``detail`` (measured values and the
pinned tolerance) through ``record_property``; it is shown next to the verdict.
"""

import re

_RESULTS: dict[str, tuple[str, str]] = {}
_NAME = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    match = _NAME.search(report.nodeid)
    if not match or "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        key = f"criterion {int(match.group(1)):2d} ({match.group(2).replace('_', ' ')})"
        param = re.search(r"\[(.+)\]$", report.nodeid)
        if param:
            key += f" [{param.group(1)}]"
        detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
        _RESULTS[key] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: (int(k.split()[1]), k)):
        verdict, detail = _RESULTS[key]
        terminalreporter.write_line(f"{key}: {verdict}" + (f"  [{detail}]" if detail else ""))
