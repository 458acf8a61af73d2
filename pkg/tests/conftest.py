import time
from dataclasses import dataclass

import pytest

from robosync.config import default_config
from robosync.engine import ExperimentResult, run_experiment

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@dataclass
class TimedRun:
    result: ExperimentResult
    seconds: float


@pytest.fixture(scope="session")
def default_cfg():
    return default_config()


@pytest.fixture(scope="session")
def learn_run(default_cfg) -> TimedRun:
    t0 = time.perf_counter()
    result = run_experiment(default_cfg)
    return TimedRun(result, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def replay_run(default_cfg, learn_run) -> TimedRun:
    t0 = time.perf_counter()
    result = run_experiment(default_cfg.with_sim(mode="replay"), learn_run.result.weights)
    return TimedRun(result, time.perf_counter() - t0)
