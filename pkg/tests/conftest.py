import pytest

ACCEPTANCE = {}


def record(criterion, passed, summary):
    ACCEPTANCE[criterion] = (bool(passed), summary)
    print(f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {summary}")


@pytest.fixture
def acceptance_record():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, summary = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {summary}")
