from __future__ import annotations

import os

import pytest

# one line per acceptance criterion, printed at the end of the session
CRITERIA_LINES: dict[str, str] = {}


def pytest_collection_modifyitems(config, items):
    if os.environ.get("WGBANDS_LONG") == "1":
        return
    skip = pytest.mark.skip(reason="very long run; set WGBANDS_LONG=1")
    for item in items:
        if "optional" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA_LINES, key=lambda k: (len(k), k)):
        terminalreporter.write_line(CRITERIA_LINES[key])


@pytest.fixture
def record_criterion():
    def record(result, key=None):
        line = result.line()
        CRITERIA_LINES[key or str(result.number)] = line
        print(line)
        return result

    return record
