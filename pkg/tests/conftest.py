import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

_CRITERIA: dict = {}


def report_criterion(number: int, passed: bool, detail: str) -> str:
    """Record and print the one-line verdict of an acceptance criterion."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    _CRITERIA[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
