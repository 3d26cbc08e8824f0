import numpy as np
import pytest

from multibump import localfield, solver, weight


@pytest.fixture(scope="session")
def step_weight():
    return weight.make_step_weight()


@pytest.fixture(scope="session")
def sine_weight():
    return weight.make_sine_weight()


@pytest.fixture(scope="session")
def levels(step_weight):
    return localfield.LevelEvaluator(step_weight, 2000)


@pytest.fixture(scope="session")
def consts(step_weight, levels):
    return weight.build_constant_pack(step_weight, levels, k=1)


@pytest.fixture(scope="session")
def sol_10(step_weight, consts):
    """Certified (1, 0) solution at mu = 1e3 on a moderate mesh."""
    window = solver.make_window((1, 0))
    opts = solver.SolveOptions(cells_per_interval=400, consts=consts)
    return solver.solve_multibump(step_weight, window, 1e3, opts)


@pytest.fixture(scope="session")
def sol_110(step_weight, consts):
    window = solver.make_window((1, 1, 0))
    opts = solver.SolveOptions(cells_per_interval=300, consts=consts)
    return solver.solve_multibump(step_weight, window, 1e3, opts)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260815)
