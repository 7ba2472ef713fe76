import math

import numpy as np
import pytest

from singlewell.eigensolve import Grid, assemble, eigenpair, eigenvalues_in_window
from singlewell.measure import auto_grid_n
from singlewell.potential import Perturbation, Potential


@pytest.fixture(scope="session")
def p1():
    return Potential.from_expression("(x-1)^2", 2.0)


@pytest.fixture(scope="session")
def p2():
    return Potential.from_expression("(x-0.7)^2", 2.0)


@pytest.fixture(scope="session")
def q3():
    return Perturbation.from_expression("eps*sin(5*x)", 2.0)


@pytest.fixture(scope="session")
def laplacian():
    """V = 0 on [0, pi]: exact Dirichlet spectrum (k+1)^2 at eps = 1."""
    return Potential.from_expression("0", math.pi, require_single_well=False)


def make_operator(potential, perturbation, eps, e_max=None, n=None):
    if n is None:
        n = auto_grid_n(potential, eps, potential.v_max if e_max is None else e_max)
    return assemble(potential, perturbation, eps, Grid(n, potential.L))


def ground_state(potential, perturbation, eps, e_max=None, n=None):
    op = make_operator(potential, perturbation, eps, e_max=e_max, n=n)
    return op, eigenpair(op, float(eigenvalues_in_window(op, count=1)[0]))


@pytest.fixture(scope="session")
def p1_ground_0125(p1):
    """Shared ground-state pair of P1 at eps = 0.0125."""
    return ground_state(p1, None, 0.0125)


@pytest.fixture(scope="session")
def p1_ground_005(p1):
    return ground_state(p1, None, 0.05)
