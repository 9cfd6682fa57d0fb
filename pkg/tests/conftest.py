import numpy as np
import pytest

from gdeform import geometries as geo
from gdeform.contact_bridge import contact_lift
from gdeform.surface_dsl import ParamGrid

CYLINDER_GRID = ParamGrid((0.1, 2.0), (-0.5, 0.5), 12, 12)
QUADRIC_GRID = ParamGrid((0.2, 1.0), (0.2, 1.0), 10, 10)
SADDLE_GRID = ParamGrid((0.1, 0.7), (0.2, 0.8), 10, 10)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def conformal_cylinder():
    return geo.conformal_lift("cylinder", CYLINDER_GRID)


@pytest.fixture(scope="session")
def projective_quadric():
    return geo.projective_lift("quadric", QUADRIC_GRID)


@pytest.fixture(scope="session")
def lie_quadric(projective_quadric):
    return contact_lift(projective_quadric)


@pytest.fixture(scope="session")
def legendre_cylinder():
    return geo.legendre_lift("cylinder", CYLINDER_GRID)


@pytest.fixture(scope="session")
def legendre_saddle():
    return geo.legendre_lift("saddle", SADDLE_GRID)
