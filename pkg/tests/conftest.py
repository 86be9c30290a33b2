import pytest

# (label, passed, detail) lines collected by tests/test_acceptance.py
VERDICTS = []


@pytest.fixture
def verdict():
    def record(label, passed, detail=""):
        VERDICTS.append((label, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in VERDICTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
