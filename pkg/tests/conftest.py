"""Collects acceptance-criterion verdicts and prints them after the run.

The acceptance tests record one `criterion-N ...: PASS/FAIL` line each; the
terminal-summary hook echoes them in a dedicated section so they are visible
under pytest's default output capture.
"""

VERDICTS: list[str] = []


def record_verdict(line: str) -> None:
    VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.line(line)
