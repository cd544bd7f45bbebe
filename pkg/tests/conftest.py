import pytest

_CRITERIA: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture
def criterion():
    """``criterion(n, title, passed, detail)`` records and asserts one acceptance result."""
    def record(number: int, title: str, passed: bool, detail: str = ""):
        _CRITERIA[number] = (bool(passed), title, detail)
        print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title} ({detail})")
        assert passed, f"criterion {number} failed: {title} ({detail})"
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, title, detail = _CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title} ({detail})")
