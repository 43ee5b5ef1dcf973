import functools

import pytest

from gwperc.montecarlo import run_experiment
from gwperc.offspring import OffspringDistribution
from gwperc.simulator import Scenario

SEED = 20240611

# One line per acceptance criterion, filled in by tests/test_acceptance.py.
ACCEPTANCE_LINES: dict[int, str] = {}


@functools.lru_cache(maxsize=None)
def cached_run(scenario: Scenario, replicates: int, seed: int = SEED, workers: int = 1, **kwargs):
    """Monte Carlo runs shared between test modules (results are immutable)."""
    return run_experiment(scenario, replicates, seed, workers=workers, **kwargs)


@pytest.fixture(scope="session")
def det2():
    return OffspringDistribution.deterministic(2)


@pytest.fixture(scope="session")
def det1():
    return OffspringDistribution.deterministic(1)


@pytest.fixture(scope="session")
def geom_half():
    return OffspringDistribution.shifted_geometric(0.5)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
