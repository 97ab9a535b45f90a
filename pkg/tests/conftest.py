import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sliceplan.model import case_study_topology  # noqa: E402

PORTFOLIO_1 = (0.8, 0.2, 0.05, 0.1)
PORTFOLIO_2 = (0.5, 0.15, 0.1, 0.15)


@pytest.fixture
def video():
    return case_study_topology(2000.0, 0.1, sla_latency=0.010, vn_id="video")


@pytest.fixture
def monitoring():
    return case_study_topology(50.0, 0.5, sla_latency=0.020, vn_id="monitoring")


@pytest.fixture
def scenario_dir():
    return Path(__file__).resolve().parents[1] / "scenarios"


_criteria: list[tuple[str, str, float]] = []


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _criteria.append((props["criterion"], "PASS" if report.passed else "FAIL", report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, secs in _criteria:
        terminalreporter.write_line(f"{outcome}  {name}  ({secs:.2f} s)")
