import pytest

_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line; printed again in the terminal summary."""
    def emit(name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _LINES.append(line)
        print(line)
        return passed
    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
