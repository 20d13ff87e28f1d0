import numpy as np
import pytest

from app.services.simulation_service import M2_GENERATORS
from app.utils.errors import DegenerateBasisError, InvalidArgumentError
from app.utils.grid import (
    CurveSet,
    Grid,
    gram_matrix,
    gram_schmidt,
    inner_product,
    norm,
    regular_grid,
    sample_adequate_grid,
)


def test_adequate_grid_has_one_node_per_cell():
    grid = sample_adequate_grid(4, seed=1)
    assert grid.L == 4
    assert 0.0 <= grid.nodes[0] < 0.25
    assert grid.is_adequate()
    assert grid.weight == 0.25


def test_simulation_grid_cells():
    grid = sample_adequate_grid(100, seed=123)
    j = np.arange(100)
    assert np.all(grid.nodes >= 0.01 * j)
    assert np.all(grid.nodes <= 0.01 * (j + 1))
    assert np.max(np.abs(grid.nodes - (j + 0.5) / 100)) <= 0.5 / 100


def test_adequate_grid_is_deterministic():
    np.testing.assert_array_equal(sample_adequate_grid(30, 9).nodes, sample_adequate_grid(30, 9).nodes)


def test_grid_size_zero_rejected():
    with pytest.raises(InvalidArgumentError):
        sample_adequate_grid(0, seed=1)


def test_grid_rejects_unsorted_nodes():
    with pytest.raises(InvalidArgumentError):
        Grid([0.5, 0.2])
    with pytest.raises(InvalidArgumentError):
        Grid([0.2, 1.5])


def test_inner_product_of_constants_is_one():
    grid = sample_adequate_grid(17, seed=2)
    one = np.ones(17)
    assert inner_product(one, one, grid) == pytest.approx(1.0, abs=1e-15)


def test_inner_product_of_fourier_functions(grid100):
    s = np.sqrt(2) * np.sin(2 * np.pi * grid100.nodes)
    c = np.sqrt(2) * np.cos(2 * np.pi * grid100.nodes)
    assert abs(inner_product(s, s, grid100) - 1.0) <= 0.05
    assert abs(inner_product(s, c, grid100)) <= 0.05


def test_inner_product_length_mismatch(grid100):
    with pytest.raises(InvalidArgumentError):
        inner_product(np.ones(100), np.ones(99), grid100)


def test_inner_product_is_symmetric_and_norm_nonnegative(grid100):
    rng = np.random.default_rng(0)
    f, g = rng.standard_normal((2, 100))
    assert inner_product(f, g, grid100) == pytest.approx(inner_product(g, f, grid100))
    assert norm(f, grid100) >= 0


def test_quadrature_matches_integral_to_order_one_over_L():
    grid = regular_grid(200)
    t = grid.nodes
    value = inner_product(np.sin(np.pi * t), t, grid)
    assert abs(value - 1 / np.pi) <= 1 / grid.L


def test_gram_schmidt_keeps_orthonormal_input():
    grid = regular_grid(4)
    basis = [2.0 * np.eye(4)[k] for k in range(3)]
    out = gram_schmidt(basis, grid)
    for before, after in zip(basis, out):
        np.testing.assert_allclose(after, before, atol=1e-12)


def test_gram_schmidt_orthonormalizes_two_inputs(grid100):
    t = grid100.nodes
    first, second = gram_schmidt([t, t ** 2 + 1], grid100)
    assert abs(inner_product(first, second, grid100)) <= 1e-10
    assert norm(first, grid100) == pytest.approx(1.0, abs=1e-10)
    assert norm(second, grid100) == pytest.approx(1.0, abs=1e-10)


def test_gram_schmidt_on_m2_generators(grid100):
    functions = gram_schmidt([f(grid100.nodes) for f in M2_GENERATORS], grid100)
    np.testing.assert_allclose(gram_matrix(functions, grid100), np.eye(5), atol=1e-8)


def test_gram_schmidt_preserves_processing_order(grid100):
    t = grid100.nodes
    out = gram_schmidt([np.ones_like(t), t], grid100)
    np.testing.assert_allclose(out[0], np.ones_like(t), atol=1e-12)


def test_gram_schmidt_rejects_dependent_input(grid100):
    t = grid100.nodes
    with pytest.raises(DegenerateBasisError):
        gram_schmidt([t, 2 * t], grid100)


def test_curve_set_restrict_and_rows(grid100):
    data = np.arange(300, dtype=float).reshape(3, 100)
    curves = CurveSet(data, grid100)
    sub = curves.restrict([0, 50, 99])
    assert sub.L == 3
    np.testing.assert_array_equal(sub.data[:, 1], data[:, 50])
    np.testing.assert_array_equal(sub.grid.nodes, grid100.nodes[[0, 50, 99]])
    assert curves.rows([2]).n == 1


def test_curve_set_rejects_wrong_width(grid100):
    with pytest.raises(InvalidArgumentError):
        CurveSet(np.zeros((2, 99)), grid100)


def test_curve_set_copies_input(grid100):
    data = np.zeros((2, 100))
    curves = CurveSet(data, grid100)
    data[0, 0] = 5.0
    assert curves.data[0, 0] == 0.0
