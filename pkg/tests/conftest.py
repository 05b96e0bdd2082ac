import os
import tempfile
from pathlib import Path

import pytest

# keep simulated thresholds out of the user's cache; reuse them across the session
_TABLE = Path(os.environ.get("MQSEG_TEST_TABLE", Path(tempfile.gettempdir()) / "mqseg-test-thresholds.txt"))
os.environ["MQSEG_THRESHOLD_PATH"] = str(_TABLE)

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    return ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
