import re

_ACCEPTANCE = re.compile(r"test_acceptance\.py::test_c(\d+)_(\w+)")
_results: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = _ACCEPTANCE.search(report.nodeid)
    if not m:
        return
    num, name = int(m.group(1)), m.group(2)
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _results[num] = (status, f"{name} ({report.duration:.1f}s)")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        status, label = _results[num]
        terminalreporter.write_line(f"[{status}] criterion {num:2d}: {label}")
