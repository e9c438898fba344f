import pytest

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(number, title): numbered acceptance criterion, reported "
        "as one pass/fail line at the end of the run",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call":
        _OUTCOMES[number] = (title, report.passed)
    elif report.failed:  # setup or teardown error
        _OUTCOMES[number] = (title, False)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, passed = _OUTCOMES[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}")
