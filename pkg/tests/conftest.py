"""Session-scoped example models and solved schedules shared across tests."""
import numpy as np
import pytest

from mmvlab import example_model, solve_schedule


@pytest.fixture(scope="session")
def ex1():
    return example_model(1)


@pytest.fixture(scope="session")
def ex2():
    return example_model(2)


@pytest.fixture(scope="session")
def ex3():
    return example_model(3)


@pytest.fixture(scope="session")
def ex4():
    return example_model(4)


@pytest.fixture(scope="session")
def ex2_sol_mv(ex2):
    return solve_schedule(ex2, "mv")


@pytest.fixture(scope="session")
def ex2_sol_mmv(ex2):
    return solve_schedule(ex2, "mmv")


@pytest.fixture
def rng():
    return np.random.default_rng(20260818)
