import numpy as np
import pytest

from ofbs.kernel import KernelSpec
from ofbs.matfun import OperatorExponent

# the exponents every convergence check runs against
SCALAR_H = (0.6, 0.75, 0.9)
DIAG_D = np.diag([0.6, 0.8])
JORDAN_D = np.array([[0.7, 0.2], [0.0, 0.7]])

GRID_4x4 = tuple((t, s) for t in (0.25, 0.5, 0.75, 1.0) for s in (0.25, 0.5, 0.75, 1.0))


@pytest.fixture(scope="session")
def scalar_spec():
    return KernelSpec(exponent=OperatorExponent.from_matrix([[0.75]]))


@pytest.fixture(scope="session")
def diag_spec():
    return KernelSpec(exponent=OperatorExponent.from_matrix(DIAG_D))


@pytest.fixture(scope="session")
def jordan_spec():
    return KernelSpec(exponent=OperatorExponent.from_matrix(JORDAN_D))


def scalar_exponent(H):
    return OperatorExponent.from_matrix([[H]])
