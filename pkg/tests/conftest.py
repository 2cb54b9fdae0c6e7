import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from splinekern.core import DesignDensity, make_grid, named_density

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

DENSITIES = ("uniform", "linear", "truncated_normal")


@pytest.fixture(scope="session")
def grid():
    return make_grid(2000)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(400)


@pytest.fixture(scope="session")
def uniform(grid):
    return DesignDensity.uniform(grid)


@pytest.fixture(scope="session")
def densities(grid):
    return {name: named_density(grid, name) for name in DENSITIES}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        request.config.acceptance_lines.append(line)
        return passed

    return record
