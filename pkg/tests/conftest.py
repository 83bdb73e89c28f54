"""Shared reporting for the acceptance suite.

Acceptance tests record one verdict line each through the `criterion`
fixture. Lines print inline as they happen and are replayed in a dedicated
terminal section after the run, so the verdicts survive output capture and
appear together regardless of test ordering.
"""

import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion():
    """Recorder for one numbered acceptance verdict.

    passed=True/False prints PASS/FAIL; passed=None prints SKIP (used when
    an external dataset is absent).
    """

    def record(number: int, passed: bool | None, detail: str) -> None:
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"CRITERION {number}: {status} - {detail}"
        _LINES.append(line)
        print(line)

    return record


def _number(line: str) -> int:
    return int(line.split(":")[0].split()[1])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES, key=_number):
        terminalreporter.write_line(line)
