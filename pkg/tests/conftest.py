"""Collects one PASS/FAIL line per acceptance criterion and prints them after the run."""

import pytest

_LINES: list = []


@pytest.fixture(scope="session")
def record():
    def add(criterion: str, passed: bool, detail: str):
        _LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")
        print(_LINES[-1])
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
