import time
from dataclasses import replace

import pytest

from mecslam.estimator import EstimatorConfig
from mecslam.harness import run_variant
from mecslam.harness.cli import load_scenario
from mecslam.simworld import run_scenario

CRITERIA = {}


def record(n, ok, detail):
    CRITERIA[n] = (bool(ok), detail)


class Runs:
    """Simulate each preset once and run variants on demand, keeping wall times."""

    def __init__(self):
        self.logs, self.runs, self.seconds = {}, {}, {}

    def log(self, preset):
        if preset not in self.logs:
            t = time.perf_counter()
            self.logs[preset] = run_scenario(load_scenario(preset))
            self.seconds[preset] = time.perf_counter() - t
        return self.logs[preset]

    def run(self, preset, variant, plane=True):
        key = (preset, variant, plane)
        if key not in self.runs:
            log = self.log(preset)
            t = time.perf_counter()
            self.runs[key] = run_variant(log, variant, replace(EstimatorConfig(), plane=plane))
            self.seconds[key] = time.perf_counter() - t
        return self.runs[key]


@pytest.fixture(scope="session")
def runs():
    return Runs()


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
