from __future__ import annotations

import pytest

_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Collect one PASS/FAIL line per acceptance criterion for the summary."""
    return _LINES


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
