import numpy as np
import pytest
from pydantic import ValidationError

from app.models.schemas import BasisFamily, ErrorKind, ModelSpec
from app.services.covariance_service import empirical_covariance
from app.services.simulation_service import (
    CANONICAL_MODELS,
    M3_GENERATORS,
    banded_error,
    canonical_model,
    error_covariance,
    error_spec,
    eigenvalue_schedule,
    iid_error,
    make_basis,
    no_error,
    simulate,
    slope_for_model,
    tail_eigenvalues_m456,
    triangular_error_basis,
    true_covariance,
)
from app.utils.errors import InvalidArgumentError
from app.utils.grid import gram_matrix, inner_product, norm, regular_grid


def test_eigenvalue_schedules():
    np.testing.assert_allclose(eigenvalue_schedule(3), [1.5, 0.9, 0.3])
    np.testing.assert_allclose(eigenvalue_schedule(5), [1.5, 1.2, 0.9, 0.6, 0.3])
    np.testing.assert_allclose(eigenvalue_schedule(1), [1.5])
    with pytest.raises(InvalidArgumentError):
        eigenvalue_schedule(3, hi=0.3, lo=1.5)


def test_fourier_basis_is_nearly_orthonormal(grid100):
    basis = make_basis(canonical_model('M1'), grid100)
    assert np.max(np.abs(gram_matrix(basis, grid100) - np.eye(3))) <= 0.06


def test_legendre_basis():
    grid = regular_grid(100)
    assert M3_GENERATORS[2](np.array([0.0]))[0] == 1.0
    basis = make_basis(canonical_model('M3'), grid)
    assert len(basis) == 5
    assert np.max(np.abs(gram_matrix(basis, grid) - np.eye(5))) <= 0.06


def test_gram_schmidt_family_is_orthonormal_on_grid(grid100):
    basis = make_basis(canonical_model('M2'), grid100)
    np.testing.assert_allclose(gram_matrix(basis, grid100), np.eye(5), atol=1e-8)


def test_extended_families_have_twenty_functions(grid100):
    for name in ('M4', 'M5', 'M6'):
        assert len(make_basis(canonical_model(name), grid100)) == 20


def test_extended_fourier_tail(midpoint_grid):
    basis = make_basis(canonical_model('M4'), midpoint_grid)
    t = midpoint_grid.nodes
    np.testing.assert_allclose(basis[3], np.sqrt(2) * np.sin(4 * np.pi * t), atol=1e-12)
    np.testing.assert_allclose(basis[4], np.sqrt(2) * np.cos(4 * np.pi * t), atol=1e-12)


def test_tent_functions():
    grid = regular_grid(100)
    tents = triangular_error_basis(0.1, grid)
    assert len(tents) == 10
    for tent in tents:
        assert abs(norm(tent, grid) ** 2 - 1.0) <= 0.1
    for a in range(10):
        for b in range(a + 1, 10):
            assert np.all(tents[a] * tents[b] == 0.0)
    assert np.all(tents[0][grid.nodes > 0.1] == 0.0)


def test_tent_bandwidth_out_of_range():
    with pytest.raises(InvalidArgumentError):
        triangular_error_basis(1.5, regular_grid(10))


def test_banded_error_variances():
    err = banded_error(0.05)
    assert err.D == 20
    assert err.gammas[0] == 0.09
    np.testing.assert_allclose(err.gammas[1:], np.linspace(0.04, 0.01, 19))


def test_no_error_gives_identical_curves(grid100):
    data = simulate(canonical_model('M1'), no_error(), 10, grid100, seed=1)
    np.testing.assert_array_equal(data.W.data, data.X.data)


def test_observed_curves_are_latent_plus_error(m1_banded):
    np.testing.assert_array_equal(m1_banded.W.data, m1_banded.X.data + m1_banded.U.data)
    assert m1_banded.y.shape == (100,)


def test_same_seed_same_sample(grid100):
    first = simulate(canonical_model('M2'), banded_error(0.1), 20, grid100, seed=42)
    second = simulate(canonical_model('M2'), banded_error(0.1), 20, grid100, seed=42)
    other = simulate(canonical_model('M2'), banded_error(0.1), 20, grid100, seed=43)
    np.testing.assert_array_equal(first.W.data, second.W.data)
    np.testing.assert_array_equal(first.y, second.y)
    assert not np.array_equal(first.W.data, other.W.data)


def test_latent_covariance_converges():
    grid = regular_grid(20)
    model = canonical_model('M1')
    data = simulate(model, no_error(), 50000, grid, seed=5)
    K = empirical_covariance(data.X).entries
    assert np.max(np.abs(K - true_covariance(model, grid))) <= 0.1


def test_banded_error_is_uncorrelated_beyond_bandwidth(grid100):
    delta = 0.05
    K_U = error_covariance(banded_error(delta), grid100)
    t = grid100.nodes
    far = np.abs(t[:, None] - t[None, :]) > delta
    assert np.all(K_U[far] == 0.0)

    n = 2000
    data = simulate(canonical_model('M1'), banded_error(delta), n, grid100, seed=8)
    empirical = empirical_covariance(data.U).entries
    spread = np.sqrt(np.outer(np.diag(empirical), np.diag(empirical)) / n)
    assert np.all(np.abs(empirical[far]) <= 5 * spread[far] + 1e-15)


def test_iid_error_variance():
    grid = regular_grid(20)
    data = simulate(canonical_model('M1'), iid_error(0.25), 4000, grid, seed=2)
    assert np.max(np.abs(np.var(data.U.data, axis=0) - 0.25)) <= 0.03


def test_error_never_overwhelms_signal():
    for name in ('M1', 'M2', 'M3'):
        smallest = min(canonical_model(name).eigenvalues)
        for delta in (0.05, 0.1, 0.2):
            assert max(banded_error(delta).gammas) < smallest


def test_slope_coefficients(midpoint_grid):
    model = canonical_model('M1')
    E = np.vstack(make_basis(model, midpoint_grid))
    beta = slope_for_model(model, midpoint_grid).beta
    np.testing.assert_allclose(E @ beta / midpoint_grid.L, [1.0, 1.0, -1.0], atol=1e-12)
    assert canonical_model('M6').slope_coefficients[6] == 0.3


def test_zero_coefficients_give_zero_slope(midpoint_grid):
    model = ModelSpec(basis_family=BasisFamily.FOURIER, rank=2, eigenvalues=[1.0, 0.5])
    np.testing.assert_array_equal(slope_for_model(model, midpoint_grid).beta, np.zeros(midpoint_grid.L))


def test_tail_eigenvalues():
    m4 = tail_eigenvalues_m456('M4')
    m5 = tail_eigenvalues_m456('M5')
    assert len(m4) == len(m5) == 20
    assert m4[3] == pytest.approx(0.1421)
    assert m5[5] == pytest.approx(0.2368)
    assert m4[:3].sum() / m4.sum() >= 0.94
    assert m5[:5].sum() / m5.sum() >= 0.94
    with pytest.raises(InvalidArgumentError):
        tail_eigenvalues_m456('M1')


def test_unknown_model_rejected():
    assert CANONICAL_MODELS == ('M1', 'M2', 'M3', 'M4', 'M5', 'M6')
    with pytest.raises(InvalidArgumentError):
        canonical_model('M7')


def test_functional_response(midpoint_grid):
    model = ModelSpec(basis_family=BasisFamily.FOURIER, rank=3, eigenvalues=[1.5, 0.9, 0.3],
                      operator_coefficients=[[1.0, 0.0], [0.0, 1.0]], response_noise=0.0)
    data = simulate(model, no_error(), 15, midpoint_grid, seed=1)
    E = data.basis
    expected = (data.X.data @ E[:2].T / midpoint_grid.L) @ E[:2]
    np.testing.assert_allclose(data.y.data, expected, atol=1e-10)
    assert data.beta is None


def test_quadratic_response(midpoint_grid):
    model = ModelSpec(basis_family=BasisFamily.FOURIER, rank=3, eigenvalues=[1.5, 0.9, 0.3],
                      quadratic_coefficients=[[1.0]], response_noise=0.0)
    data = simulate(model, no_error(), 15, midpoint_grid, seed=1)
    first = np.array([inner_product(x, data.basis[0], midpoint_grid) for x in data.X.data])
    np.testing.assert_allclose(data.y, first ** 2, atol=1e-10)


def test_model_spec_validation():
    with pytest.raises(ValidationError):
        ModelSpec(basis_family=BasisFamily.FOURIER, rank=2, eigenvalues=[0.5, 1.0])
    with pytest.raises(ValidationError):
        ModelSpec(basis_family=BasisFamily.FOURIER, rank=2, eigenvalues=[1.0, 0.5],
                  slope_coefficients=[1.0, 1.0, 1.0])
    with pytest.raises(ValidationError):
        ModelSpec(basis_family=BasisFamily.FOURIER, rank=2, eigenvalues=[1.0, 0.5],
                  quadratic_coefficients=[[1.0, 0.2], [0.0, 1.0]])
    with pytest.raises(ValidationError):
        ModelSpec(basis_family=BasisFamily.CUSTOM, rank=2, eigenvalues=[1.0, 0.5], custom_basis=[[1.0]])


def test_error_spec_helpers():
    assert error_spec('none').kind == ErrorKind.NONE
    assert error_spec('iid', variance=0.5).variance == 0.5
    assert error_spec(ErrorKind.BANDED, delta=0.2).D == 5


def test_truth_sidecar(m1_banded):
    truth = m1_banded.truth_dict()
    assert truth['model']['name'] == 'M1'
    assert truth['error']['kind'] == 'banded'
    assert len(truth['beta']) == 100
