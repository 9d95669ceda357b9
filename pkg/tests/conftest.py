import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA: list[tuple[str, bool | None, str]] = []


@pytest.fixture
def record_criterion():
    """Log a pass/fail line for the acceptance summary; passed=None marks an info line."""

    def _record(label: str, passed, detail: str = ""):
        CRITERIA.append((label, None if passed is None else bool(passed), detail))

    return _record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in CRITERIA:
        tag = "INFO" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"{tag}  {label}  {detail}")
