from __future__ import annotations

import sys

import pytest

from nlubench.protocol import Record
from nlubench.runner import WorkerConfig


def mock_worker(*flags: str, time_limit_s: float = 60.0) -> WorkerConfig:
    """WorkerConfig launching the in-repo mock worker with the given flags."""
    return WorkerConfig(
        launch=(sys.executable, "-m", "nlubench.mockworker", *flags),
        time_limit_s=time_limit_s,
    )


def simple_records(n: int, task: str = "probe") -> list[Record]:
    return [Record(id=f"{task}-{i:05d}", task=task, payload={"text": f"text {i}"}) for i in range(n)]


@pytest.fixture
def runner_dir(tmp_path):
    d = tmp_path / "results"
    d.mkdir()
    return d


# One visible pass/fail line per acceptance criterion at the end of the run.
_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid:
        if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
            _acceptance[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_acceptance):
        outcome = _acceptance[nodeid]
        label = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"{label}  {nodeid.split('::')[-1]}")
