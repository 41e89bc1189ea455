import numpy as np
import pytest

from rcar.dist import (DiscreteJoint, IndependentProduct, Normal, PointMass, Uniform,
                       ZeroInflatedRho)


def unif_normal():
    """rho ~ U(0.2, 0.8), eps ~ N(0, 1), independent."""
    return IndependentProduct(Uniform(0.2, 0.8), Normal(0.0, 1.0))


def unif_unif():
    """rho ~ U(0.2, 0.8), eps ~ U(-1, 1), independent."""
    return IndependentProduct(Uniform(0.2, 0.8), Uniform(-1.0, 1.0))


def zero_inflated(alpha=0.25):
    return ZeroInflatedRho(alpha, Uniform(0.2, 0.8), Normal(0.0, 1.0))


def constant(rho, eps):
    return IndependentProduct(PointMass(rho), PointMass(eps))


def two_point_atom():
    """Atom at rho = 0 with eps = 1; otherwise (0.5, -1)."""
    return DiscreteJoint(((0.0, 1.0, 0.3), (0.5, -1.0, 0.7)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
