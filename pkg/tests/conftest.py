import pytest

_RESULTS = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    _RESULTS.append((number, title, rep.passed, rep.duration, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, duration, detail in sorted(_RESULTS):
        status = "PASS" if passed else "FAIL"
        line = f"{status}  {number:2d}. {title} ({duration:.1f} s)"
        terminalreporter.write_line(line + (f": {detail}" if detail else ""))
