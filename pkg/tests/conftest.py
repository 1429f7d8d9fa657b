import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from anyctrl.chain import uniform_chain
from anyctrl.loop import builtin_cubic_plant, builtin_linear_plant
from anyctrl.scenarios import case_study_chain, qlambda_chain

_acceptance_outcomes: dict[str, str] = {}


@pytest.fixture(scope="session")
def uniform2():
    return uniform_chain(2)


@pytest.fixture(scope="session")
def case_study():
    return case_study_chain()


@pytest.fixture(scope="session")
def cubic_plant():
    return builtin_cubic_plant()


@pytest.fixture(scope="session")
def linear_plant():
    return builtin_linear_plant(1.2, 1.0, 0.5)


@pytest.fixture(scope="session")
def qlambda3():
    return qlambda_chain(3)


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    match = re.search(r"test_criterion_(\d+)_(\w+)", report.nodeid)
    if match:
        label = f"criterion {match.group(1)} ({match.group(2).replace('_', '-')})"
        _acceptance_outcomes[label] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for label in sorted(_acceptance_outcomes):
        outcome = _acceptance_outcomes[label]
        terminalreporter.write_line(f"{label}: {'PASS' if outcome == 'PASSED' else outcome}")
