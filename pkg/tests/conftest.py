import time

import pytest

_SESSION_START = time.perf_counter()
_criteria: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


def session_elapsed() -> float:
    return time.perf_counter() - _SESSION_START


def pytest_collection_modifyitems(items):
    # the whole-suite timing check has to observe every other test
    last = [it for it in items if it.get_closest_marker("run_last")]
    items[:] = [it for it in items if not it.get_closest_marker("run_last")] + last


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props or (report.when != "call" and report.passed):
        return
    _criteria.setdefault(props["criterion"], []).append((report.nodeid.split("::")[-1], report.passed, props.get("detail", "")))


def pytest_itemcollected(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        results = _criteria[n]
        ok = all(passed for _, passed, _ in results)
        details = "; ".join(d for _, _, d in results if d)
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {details}")
