import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per criterion; they are echoed in the terminal summary."""

    def report(number, title, ok, detail=""):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
