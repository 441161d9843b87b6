import pytest

# (number, title, passed, detail) rows filled in by test_acceptance
ACCEPTANCE = []


def record_criterion(number, title, passed, detail=""):
    line = f"{'PASS' if passed else 'FAIL'} [{number:2d}] {title}: {detail}"
    print(line)
    ACCEPTANCE.append((number, line))


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
