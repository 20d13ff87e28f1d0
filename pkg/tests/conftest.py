"""Shared fixtures: seeded grids, small simulated samples and a Flask test client"""

import numpy as np
import pytest

from app.services.simulation_service import banded_error, canonical_model, no_error, simulate
from app.utils.grid import CurveSet, regular_grid, sample_adequate_grid


@pytest.fixture
def grid100():
    return sample_adequate_grid(100, seed=7)


@pytest.fixture
def midpoint_grid():
    return regular_grid(50)


@pytest.fixture
def m1_clean(grid100):
    """M1 covariate without measurement error: the empirical covariance has rank exactly 3"""
    return simulate(canonical_model('M1'), no_error(), 60, grid100, seed=11)


@pytest.fixture
def m1_banded(grid100):
    return simulate(canonical_model('M1'), banded_error(0.05), 100, grid100, seed=3)


@pytest.fixture
def rank3_curves(midpoint_grid):
    """60 curves spanned by three orthonormal grid functions, with their basis"""
    rng = np.random.default_rng(5)
    t = midpoint_grid.nodes
    E = np.vstack([np.ones_like(t), np.sqrt(2) * np.sin(2 * np.pi * t), np.sqrt(2) * np.cos(2 * np.pi * t)])
    scores = rng.standard_normal((60, 3)) * np.sqrt([1.5, 0.9, 0.3])
    return CurveSet(scores @ E, midpoint_grid), E


@pytest.fixture
def client():
    from main import create_app
    app = create_app('testing')
    with app.test_client() as test_client:
        yield test_client
