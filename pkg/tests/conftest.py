import pytest

# Lines recorded by the acceptance tests, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    def add(criterion: int, title: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:2d} "
                                f"{title}: {detail}")
    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
        terminalreporter.write_line(line)
