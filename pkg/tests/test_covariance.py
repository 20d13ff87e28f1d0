import numpy as np
import pytest

from app.services.covariance_service import (
    BandMask,
    CovMatrix,
    LowRankFactor,
    band_mask,
    empirical_covariance,
    masked_gradient,
    masked_objective,
    minimize_rank_j,
    rank_scan,
    scree_select,
)
from app.utils.errors import InsufficientDataError, InvalidArgumentError
from app.utils.grid import CurveSet, regular_grid


def _low_rank_with_band_noise(L=40, delta_star=0.15, seed=0):
    """Rank-2 covariance plus a PSD perturbation living inside the masked-out band"""
    t = regular_grid(L).nodes
    E = np.vstack([np.ones_like(t), np.sqrt(2) * np.sin(2 * np.pi * t)])
    K = E.T @ np.diag([1.5, 0.9]) @ E
    mask = band_mask(L, delta_star)
    rng = np.random.default_rng(seed)
    bump = np.zeros((L, L))
    for i in range(L):
        for j in range(L):
            if abs(i - j) <= 2:
                bump[i, j] = 0.05 * (3 - abs(i - j)) / 3
    return K, CovMatrix(K + bump * (1 + 0.1 * rng.uniform())), mask


def test_empirical_covariance_uses_divisor_n():
    grid = regular_grid(1)
    K = empirical_covariance(CurveSet([[0.0], [2.0]], grid))
    assert K.entries[0, 0] == pytest.approx(1.0)


def test_empirical_covariance_needs_two_curves():
    with pytest.raises(InsufficientDataError):
        empirical_covariance(CurveSet([[1.0, 2.0]], regular_grid(2)))


def test_cov_matrix_must_be_symmetric():
    with pytest.raises(InvalidArgumentError):
        CovMatrix([[1.0, 0.5], [0.0, 1.0]])


def test_band_mask_half_width():
    mask = band_mask(100, 0.15)
    assert mask.half_width == 15
    assert mask.entry(1, 17) == 1
    assert mask.entry(1, 16) == 0
    assert mask.entries.shape == (100, 100)
    assert mask.entries.sum() == 100 * 100 - sum(min(i + 16, 100) - max(i - 15, 0) for i in range(100))


def test_band_mask_zero_fraction_keeps_off_diagonal():
    mask = band_mask(5, 0.0)
    np.testing.assert_array_equal(mask.entries, 1.0 - np.eye(5))


def test_band_mask_rejects_wide_band():
    with pytest.raises(InvalidArgumentError):
        band_mask(100, 0.3)


def test_objective_vanishes_at_exact_factor():
    rng = np.random.default_rng(1)
    theta = rng.standard_normal((12, 2))
    K = CovMatrix(theta @ theta.T)
    assert masked_objective(LowRankFactor(theta), K, band_mask(12, 0.1)) == pytest.approx(0.0, abs=1e-20)


def test_objective_dimension_mismatch():
    K = CovMatrix(np.eye(6))
    with pytest.raises(InvalidArgumentError):
        masked_objective(LowRankFactor(np.ones((5, 1))), K, band_mask(6, 0.1))


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(2024)
    h = 1e-6
    for _ in range(50):
        L, j = int(rng.integers(4, 9)), int(rng.integers(1, 3))
        A = rng.standard_normal((L, L))
        K = CovMatrix(A @ A.T)
        mask = BandMask(L, 0.2)
        theta = rng.standard_normal((L, j))
        analytic = masked_gradient(LowRankFactor(theta), K, mask)
        numeric = np.zeros_like(theta)
        for index in np.ndindex(theta.shape):
            step = np.zeros_like(theta)
            step[index] = h
            numeric[index] = (masked_objective(LowRankFactor(theta + step), K, mask)
                              - masked_objective(LowRankFactor(theta - step), K, mask)) / (2 * h)
        scale = max(np.linalg.norm(analytic), 1.0)
        assert np.linalg.norm(analytic - numeric) <= 1e-5 * scale


def test_completion_recovers_low_rank_matrix():
    K_true, K_noisy, mask = _low_rank_with_band_noise()
    fit = minimize_rank_j(K_noisy, mask, 2, seed=0)
    assert fit.objective <= 1e-8
    relative = np.linalg.norm(fit.factor.gram() - K_true) / np.linalg.norm(K_true)
    assert relative <= 1e-3


def test_zero_covariance_gives_zero_factor():
    fit = minimize_rank_j(CovMatrix(np.zeros((10, 10))), band_mask(10, 0.1), 2)
    assert fit.objective == 0.0
    assert fit.converged
    np.testing.assert_array_equal(fit.factor.theta, np.zeros((10, 2)))


def test_rank_out_of_range_rejected():
    with pytest.raises(InvalidArgumentError):
        minimize_rank_j(CovMatrix(np.eye(5)), band_mask(5, 0.1), 6)


def test_scree_select():
    assert scree_select({1: 5.0, 2: 0.5, 3: 0.1}, 1.0) == 2
    assert scree_select({1: 5.0, 2: 4.0}, 1.0) is None
    with pytest.raises(InvalidArgumentError):
        scree_select({}, 1.0)


def test_rank_scan_is_non_increasing_and_selects_true_rank():
    _, K_noisy, mask = _low_rank_with_band_noise()
    scan = rank_scan(K_noisy, mask, 4, c1=0.01 * 40 ** 2)
    values = [scan.objectives[j] for j in range(1, 5)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    assert scan.chosen == 2


def test_rank_scan_stops_at_cutoff():
    _, K_noisy, mask = _low_rank_with_band_noise()
    scan = rank_scan(K_noisy, mask, 4, c1=0.01 * 40 ** 2, stop_at_cutoff=True)
    assert sorted(scan.fits) == [1, 2]
    assert scan.to_dict()['chosen_rank'] == 2


def test_convergence_does_not_depend_on_units():
    _, K_noisy, mask = _low_rank_with_band_noise()
    small = minimize_rank_j(K_noisy, mask, 2, seed=0)
    large = minimize_rank_j(CovMatrix(1e4 * K_noisy.entries), mask, 2, seed=0)
    assert small.converged and large.converged
    np.testing.assert_allclose(large.factor.gram(), 1e4 * small.factor.gram(), rtol=1e-3, atol=1e-3)


def test_unconverged_scan_logs_below_warning(caplog):
    _, K_noisy, mask = _low_rank_with_band_noise()
    with caplog.at_level("DEBUG", logger="app.services.covariance_service"):
        scan = rank_scan(K_noisy, mask, 3, c1=0.0, tol=0.0, max_iter=1)
    assert scan.unconverged
    assert not [record for record in caplog.records if record.levelname == "WARNING"]
    assert any("did not reach tolerance" in record.getMessage() for record in caplog.records)
