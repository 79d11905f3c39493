import pytest

# acceptance verdicts, printed once at the end of the run
_VERDICTS = {}


@pytest.fixture
def verdict():
    """record(criterion, passed, detail) stores a PASS/FAIL line for the summary."""

    def record(criterion: int, passed: bool, detail: str = "") -> bool:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}" + (f"  {detail}" if detail else "")
        _VERDICTS[criterion] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[k])
