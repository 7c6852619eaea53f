import pytest

_LINES: list[str] = []


@pytest.fixture
def accept():
    """Record one PASS/FAIL line for the acceptance summary; returns the verdict."""

    def record(name: str, ok: bool, detail: str) -> bool:
        _LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
