"""Acceptance summary: one pass/fail line per numbered criterion."""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_results: dict[int, list[tuple[str, str, str]]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results.setdefault(int(props["criterion"]), []).append(
            (report.nodeid.split("::")[-1], report.outcome, str(props.get("detail", "")))
        )


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        runs = _results[number]
        ok = all(outcome == "passed" for _, outcome, _ in runs)
        details = "; ".join(d for _, _, d in runs if d)
        tr.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {details}")
