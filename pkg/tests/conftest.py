import time

import pytest

from orthofuse.sim import DgpConfig, run_monte_carlo

DESK_PLM = DgpConfig(model="plm", m=20, K=3, delta=1 / 3, seed=0)
DESK_METHODS = ["adaptive", "personalized", "uniform(0.001)", "uniform(100)"]
DESK_REPS = 50

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def desk_plm_study():
    """50-replication PLM study at desk scale, shared by the slow tests.

    Returns the result and its wall time in seconds.
    """
    start = time.perf_counter()
    res = run_monte_carlo(DESK_PLM, DESK_METHODS, DESK_REPS, workers=1)
    return res, time.perf_counter() - start


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
