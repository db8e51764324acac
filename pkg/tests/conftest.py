import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(key, title, passed, detail)``."""

    def record(key, title, passed, detail):
        _CRITERIA.append((key, title, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key, title, passed, detail in sorted(_CRITERIA, key=lambda r: int(r[0])):
        tr.write_line(f"[{'PASS' if passed else 'FAIL'}] {key}. {title}: {detail}")
