import numpy as np
import pytest

from probesched import evaluator

# Every ObjectiveReport built anywhere in the run is checked against both
# objective chains; the acceptance module reads the tally at the end.
CHAINS = {"checked": 0, "violations": []}


def _check_chain(report):
    CHAINS["checked"] += 1
    if not report.chains_hold():
        CHAINS["violations"].append(report.values())


evaluator.observe(_check_chain)


def pytest_collection_modifyitems(session, config, items):
    # acceptance criteria run last so the chain tally covers the whole run
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, printed after the run
_VERDICTS = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _VERDICTS.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _VERDICTS:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
