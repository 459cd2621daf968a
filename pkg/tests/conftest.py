"""Shared pytest wiring.

The acceptance tests emit one verdict line per criterion.  Under the
default fd-level capture those lines are swallowed for passing tests, so
the terminal summary replays whatever was recorded once the run is over.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    for name in ("tests.test_acceptance", "test_acceptance"):
        mod = sys.modules.get(name)
        if mod is not None:
            break
    else:
        return
    lines = getattr(mod, "VERDICT_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
