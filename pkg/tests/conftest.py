import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record the verdict line of an acceptance criterion.

    Usage: ``criterion(3, passed, "detail")``. The line is printed
    immediately and repeated in the terminal summary.
    """
    def record(number, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
        _LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
