import time

import numpy as np
import pytest

from learnduality.compositions import CATALOGUE
from learnduality.experiments import ExperimentConfig, execute

# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []

EXPERIMENT_SEED = 20240601


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def experiment_runs():
    """All five catalogued experiments at default settings, run once."""
    runs, timings = {}, {}
    for comp_id in sorted(CATALOGUE):
        cfg = ExperimentConfig.default(comp_id, EXPERIMENT_SEED, write_samples=False)
        t0 = time.perf_counter()
        runs[comp_id] = execute(cfg)
        timings[comp_id] = time.perf_counter() - t0
    return runs, timings


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
