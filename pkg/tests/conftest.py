import pytest


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def record(request):
    """Store ``(ok, detail)`` for an acceptance criterion under its number."""
    log = request.config._acceptance

    def _record(number, ok, detail):
        log[number] = (bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = getattr(config, "_acceptance", {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(log):
        ok, detail = log[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}")
