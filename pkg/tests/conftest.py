import pytest

# (criterion, description, passed, detail) rows filled in by test_acceptance
_ACCEPTANCE = []


@pytest.fixture
def record():
    def _record(num, name, ok, detail=""):
        _ACCEPTANCE.append((num, name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  [{num}] {name}: {detail}")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(_ACCEPTANCE, key=lambda r: (int(str(r[0]).rstrip("ab")), str(r[0]))):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  [{num}] {name}: {detail}")
