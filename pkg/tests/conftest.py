from __future__ import annotations

import pytest

from rowmarket import PopulationModel

# (criterion number, description, passed) rows filled in by test_acceptance
ACCEPTANCE_RESULTS: list[tuple[int, str, bool]] = []


def record_criterion(number: int, description: str, passed: bool) -> None:
    ACCEPTANCE_RESULTS.append((number, description, passed))
    print(f"ACCEPTANCE CRITERION {number}: {'PASS' if passed else 'FAIL'} - {description}")


@pytest.fixture(scope="session")
def population() -> PopulationModel:
    return PopulationModel.default()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, passed in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if passed else 'FAIL'} - {description}"
        )
