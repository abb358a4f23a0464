import os
from pathlib import Path

import pytest

# Keep the alpha* calibration cache inside the checkout so runs are hermetic.
os.environ.setdefault(
    "MHRSIM_CACHE", str(Path(__file__).resolve().parent.parent / ".mhrsim_cache" / "alpha_star.txt")
)

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
