"""Shared pytest hooks."""

import sys


def pytest_terminal_summary(terminalreporter):
    # echo the acceptance-gate verdicts where captured stdout would hide them
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERION_LINES", None) if mod else None
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
