import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Record and echo one PASS/FAIL line for an acceptance criterion."""

    def report(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
