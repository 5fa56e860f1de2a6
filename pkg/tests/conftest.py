"""Shared pytest wiring: print the acceptance checklist after the run."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for name, mod in sys.modules.items():
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            lines = getattr(mod, "CHECKLIST", [])
            break
    if not lines:
        return
    terminalreporter.section("acceptance checklist")
    for line in lines:
        terminalreporter.write_line(line)
