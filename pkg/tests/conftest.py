import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record a one-line PASS/FAIL verdict, echoed in the terminal summary."""

    def record(number, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES, key=lambda t: t[0]):
        terminalreporter.write_line(line)
