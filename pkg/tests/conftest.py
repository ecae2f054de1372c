import pytest

from adaptact.tensor import Rng

_VERDICTS = []


@pytest.fixture
def rng():
    return Rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    cid, title = marker.args
    status = "PASS" if report.passed else "FAIL"
    detail = ""
    if report.failed:
        detail = str(call.excinfo.value).strip().splitlines()[0][:160] if call.excinfo else ""
    _VERDICTS.append((cid, status, title, detail))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    merged = {}
    for cid, status, title, detail in _VERDICTS:
        prev = merged.get(cid)
        if prev is None or (prev[0] == "PASS" and status == "FAIL"):
            merged[cid] = (status, title, detail)
    for cid in sorted(merged):
        status, title, detail = merged[cid]
        line = f"{cid} {status}  {title}"
        if detail:
            line += f"  -- {detail}"
        terminalreporter.write_line(line)
