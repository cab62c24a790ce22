import pytest

CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[CRITERIA] = {}


@pytest.fixture
def criterion(request):
    """``criterion(id, name, passed, detail)`` records one acceptance line."""
    table = request.config.stash[CRITERIA]

    def record(cid: int, name: str, passed: bool, detail: str = ""):
        table[cid] = (name, bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(CRITERIA, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(table):
        name, passed, detail = table[cid]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] C{cid:02d} {name}: {detail}")
