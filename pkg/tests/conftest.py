import numpy as np
import pytest

from switchmargin import AlgorithmConfig, SwitchedLinearSystem, under_approximate_margin

EX1_A = [[0.0, 1.0], [-1.0, -0.5]]
EX1_A0 = [[0.0, 0.0], [-1.0, 0.0]]
EX2_A = [
    [-3.088, 0.0, -1425.042, 4.5956],
    [-18.906, -166.878, 29.223, 0.0],
    [6.762, 4.445, -19.389, 0.0],
    [0.0, 1428.6, 0.0, 0.0],
]
EX2_A0 = [
    [-1.0, 0.0, -10.0, 10.0],
    [-10.0, -10.0, 10.0, 0.0],
    [10.0, 10.0, -10.0, 0.0],
    [0.0, 10.0, 0.0, 0.0],
]


@pytest.fixture(scope="session")
def ex1():
    return SwitchedLinearSystem(EX1_A, EX1_A0)


@pytest.fixture(scope="session")
def ex2():
    return SwitchedLinearSystem(EX2_A, EX2_A0)


@pytest.fixture(scope="session")
def ex1_lower(ex1):
    """Order-14 lower-bound run on the second-order example."""
    return under_approximate_margin(ex1, AlgorithmConfig(epsilon=0.01, i_max=7))


@pytest.fixture(scope="session")
def ex1_cert(ex1_lower):
    return ex1_lower.certificate


@pytest.fixture(scope="session")
def ex2_lower(ex2):
    return under_approximate_margin(ex2, AlgorithmConfig(i_max=3))


def random_hurwitz(rng, n, shift=0.1):
    m = rng.standard_normal((n, n))
    return m - (np.max(np.linalg.eigvals(m).real) + shift + rng.uniform(0, 1)) * np.eye(n)
