"""Prints one PASS/FAIL line per acceptance criterion after the run."""

import re

_CRIT = re.compile(r"test_([PS]\d+)_")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = {}
    for status, ok in (("passed", True), ("failed", False), ("error", False)):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid and "test_learner" not in nodeid:
                continue
            m = _CRIT.search(nodeid.split("::")[-1])
            if not m:
                continue
            crit = m.group(1)
            verdict = "PASS" if ok else "FAIL"
            if crit not in lines or verdict == "FAIL":
                lines[crit] = f"{crit}: {verdict}"
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for crit in sorted(lines, key=lambda c: int(c[1:])):
            terminalreporter.write_line(lines[crit])
