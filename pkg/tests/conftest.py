"""Collect acceptance outcomes and print one line per criterion at the end of the run."""

import pytest

_RESULTS: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "failed": [], "ran": 0})
    if report.when == "call":
        entry["ran"] += 1
    if report.failed:
        entry["failed"].append(item.name)


@pytest.fixture
def note(request):
    """Attach a measured quantity to the test's report (shown in the summary on failure)."""
    def _note(key, value):
        request.node.user_properties.append((key, value))
        print(f"{key} = {value}")
    return _note


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "FAIL" if entry["failed"] else ("PASS" if entry["ran"] else "NOT RUN")
        line = f"criterion {number}: {status}  {entry['title']}"
        if entry["failed"]:
            line += "  [failed: " + ", ".join(entry["failed"]) + "]"
        terminalreporter.write_line(line)
