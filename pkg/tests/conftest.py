"""Shared fixtures; collects the acceptance verdict lines for the summary."""
import pytest

_LINES = []


@pytest.fixture
def criterion():
    """``criterion(k, passed, detail)`` records one verdict line and returns ``passed``."""

    def report(k, passed, detail=""):
        line = f"CRITERION {k}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _LINES.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES, key=lambda s: (int(s.split()[1].rstrip(":")), "(" in s)):
        terminalreporter.write_line(line)
