import numpy as np
import pytest

from pmestab.grid import make_interval
from pmestab.params import make_exponent
from pmestab.solver import DirichletProblem, SolverConfig, constant_boundary

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


def bump(grid, radius=0.5, height=1.0):
    x = grid.centers
    return height * np.clip(1 - (x / radius) ** 2, 0, None) ** 2


def bump_problem(m, cells=64, T=0.25, g=0.0):
    grid = make_interval(-1.0, 1.0, cells)
    return DirichletProblem(make_exponent(m, 1), grid, T, constant_boundary(g), bump(grid))


@pytest.fixture
def small_config():
    return SolverConfig(1 / 128)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}")
