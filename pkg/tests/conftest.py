import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lobshape.orderflow import SessionConfig  # noqa: E402


@pytest.fixture
def config():
    return SessionConfig()


_criteria: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(request):
    """Records one acceptance line: call with (passed, detail) before asserting."""

    def record(passed: bool, detail: str):
        line = f"{'PASS' if passed else 'FAIL'}  {request.node.name}: {detail}"
        _criteria.append((request.node.name, bool(passed), detail))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _criteria:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
