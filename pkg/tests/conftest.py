import json
from pathlib import Path

import numpy as np
import pytest

from nlsgap import NonlinearitySpec, PotentialSpec, build_problem

FIXTURES = Path(__file__).parent / "fixtures"

COSINE = PotentialSpec("cosine", amplitude=1.0)
ONE = PotentialSpec("constant", constant=1.0)
LOG4 = NonlinearitySpec("logtype", 4, 4)
POW4 = NonlinearitySpec("power", 4, 4)


@pytest.fixture(scope="session")
def oracles():
    return json.loads((FIXTURES / "oracles.json").read_text())


@pytest.fixture(scope="session")
def gap_problem():
    """Calibrated cosine with the log nonlinearity on 20 cells."""
    return build_problem(COSINE, LOG4, cells=20, points_per_cell=16)


@pytest.fixture(scope="session")
def small_gap_problem():
    """The same on 4 cells of 16 points (64 samples)."""
    return build_problem(COSINE, LOG4, cells=4, points_per_cell=16)


@pytest.fixture(scope="session")
def tiny_gap_problem():
    return build_problem(COSINE, LOG4, cells=4, points_per_cell=8)


@pytest.fixture(scope="session")
def tiny_positive_problem():
    return build_problem(ONE, POW4, cells=4, points_per_cell=8, calibrate=False)


@pytest.fixture(scope="session")
def soliton_problem():
    return build_problem(ONE, POW4, cells=40, points_per_cell=16, calibrate=False)


@pytest.fixture(scope="session")
def gap_ground_state(gap_problem):
    from nlsgap import ground_state

    return ground_state(gap_problem, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_plus_state(problem, rng, modes=8):
    """Unit E+ state built from the lowest ``modes`` positive eigenfunctions."""
    from nlsgap.nehari import _solver

    solver = _solver(problem.split, problem.nonlinearity)
    a = np.zeros(problem.split.n_plus)
    a[:modes] = rng.standard_normal(modes)
    a /= np.sqrt(np.dot(solver.lp, a * a))
    return solver.state(a=a)


def random_minus_state(problem, rng, scale=1.0):
    from nlsgap.nehari import _solver

    solver = _solver(problem.split, problem.nonlinearity)
    return solver.state(d=scale * rng.standard_normal(problem.split.n_minus))
