import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Append one ``PASS``/``FAIL``/``SKIP`` line to the acceptance summary."""

    def _record(criterion, ok, detail, seconds=None):
        timing = f" [{seconds:.2f}s]" if seconds is not None else ""
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"{status} {criterion}: {detail}{timing}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
