import re

import pytest

_CRITERIA = []


@pytest.fixture
def report_criterion():
    """Record one acceptance line; printed in the terminal summary."""
    def record(label, passed, detail, seconds):
        _CRITERIA.append((label, bool(passed), detail, seconds))
    return record


def _order(entry):
    num, suffix = re.match(r"(\d+)(.*)", entry[0]).groups()
    return int(num), suffix


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail, seconds in sorted(_CRITERIA, key=_order):
        terminalreporter.write_line(
            f"criterion {label}: {'PASS' if passed else 'FAIL'} ({seconds:.2f} s) {detail}")
