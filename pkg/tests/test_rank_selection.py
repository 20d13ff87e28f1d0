import numpy as np
import pytest

from app.config.config import Config
from app.models.schemas import RunConfig
from app.services.covariance_service import CovMatrix, band_mask, empirical_covariance, minimize_rank_j, rank_scan
from app.services.rank_selection_service import (
    _mode,
    condition_number,
    essential_bound,
    essential_rank,
    estimate_rank_mode,
    estimate_rank_once,
    full_grid_plan,
    mode_bound,
    subsample,
)
from app.services.simulation_service import canonical_model, iid_error, no_error, simulate, true_covariance
from app.utils.errors import InvalidArgumentError, NoFeasibleRankError
from app.utils.grid import regular_grid

C1 = Config.c1_for(25)


def test_subsample_draws_one_node_per_block(grid100):
    plan = subsample(grid100, 4, seed=3)
    assert plan.l_star == 25
    assert np.all(plan.indices // 4 == np.arange(25))
    assert plan.feasible_max_rank() == 5


def test_subsample_is_seeded(grid100):
    np.testing.assert_array_equal(subsample(grid100, 4, 1).indices, subsample(grid100, 4, 1).indices)


def test_subsample_rejects_unit_stride(grid100):
    with pytest.raises(InvalidArgumentError):
        subsample(grid100, 1, seed=0)


def test_subsample_rejects_tiny_subgrid(grid100):
    with pytest.raises(InvalidArgumentError, match=r"4\(r \+ 1\)"):
        subsample(grid100, 20, seed=0)


def test_scan_bounds():
    assert mode_bound(25) == 5
    assert essential_bound(25) == 7


def test_mode_ties_go_to_smaller_rank():
    assert _mode([3, 2, 3, 2]) == 2
    assert _mode([4, 4, 5]) == 4


def test_mode_recovers_rank_without_error(m1_clean):
    vote = estimate_rank_mode(m1_clean.W, m1_clean.grid, 4, 3, 0.15, 10, C1, seed=1)
    assert vote.per_iteration == [3, 3, 3]
    assert vote.mode == 3
    assert vote.max_rank == 5
    assert vote.histogram == {3: 3}


def test_single_draw_gives_single_vote(m1_clean):
    vote = estimate_rank_mode(m1_clean.W, m1_clean.grid, 4, 1, 0.15, 10, C1, seed=1)
    assert len(vote.per_iteration) == 1
    assert vote.to_dict()['B'] == 1


def test_draws_are_reproducible_with_threads(m1_clean):
    sequential = estimate_rank_mode(m1_clean.W, m1_clean.grid, 4, 4, 0.15, 10, C1, seed=9, threads=1)
    pooled = estimate_rank_mode(m1_clean.W, m1_clean.grid, 4, 4, 0.15, 10, C1, seed=9, threads=3)
    assert sequential.per_iteration == pooled.per_iteration


def test_saturated_scan_returns_max_rank(m1_clean):
    plan = subsample(m1_clean.grid, 4, seed=0)
    estimate = estimate_rank_once(m1_clean.W, plan, 0.15, 1, C1)
    assert estimate.rank == 1
    assert estimate.saturated


def test_condition_number_of_fit():
    t = np.linspace(0.01, 0.99, 30)
    E = np.vstack([np.ones_like(t), np.sqrt(2) * np.sin(2 * np.pi * t)])
    K = E.T @ np.diag([2.0, 0.5]) @ E
    fit = minimize_rank_j(CovMatrix(K), band_mask(30, 0.1), 2)
    values = np.linalg.eigvalsh(K)[::-1][:2]
    assert condition_number(fit) == pytest.approx(values[0] / values[1], rel=1e-4)


def test_essential_rank_requires_cap_above_one(m1_clean):
    with pytest.raises(InvalidArgumentError):
        essential_rank(m1_clean.W, m1_clean.grid, 4, 2, 0.15, 10, C1, c2=1.0, seed=0)


def test_essential_rank_without_error(m1_clean):
    result = essential_rank(m1_clean.W, m1_clean.grid, 4, 2, 0.15, 10, C1, c2=50.0, seed=0)
    assert result.rank == 3
    assert sorted(result.medians) == list(range(1, 8))
    assert result.condition_numbers[3] < 50.0
    assert result.to_dict()['essential_rank'] == 3


def test_no_feasible_rank_carries_diagnostics(grid100):
    data = simulate(canonical_model('M1'), iid_error(0.25), 60, grid100, seed=4)
    with pytest.raises(NoFeasibleRankError) as excinfo:
        essential_rank(data.W, data.grid, 4, 2, 0.15, 3, 1e-12, c2=50.0, seed=0)
    assert set(excinfo.value.diagnostics) >= {'medians', 'condition_numbers', 'c1', 'c2'}


def test_curves_must_live_on_given_grid(m1_clean, grid100):
    other = m1_clean.W.restrict(np.arange(50))
    with pytest.raises(InvalidArgumentError):
        estimate_rank_mode(other, grid100, 4, 1, 0.15, 10, C1, seed=0)


def test_full_grid_covariance_is_rank_three(m1_clean):
    values = np.linalg.eigvalsh(empirical_covariance(m1_clean.W).entries)
    assert np.sum(values > 1e-10 * values[-1]) == 3


@pytest.mark.parametrize("L, l_star, m, size", [
    (100, 25, 4, 25),
    (100, 30, 3, 33),
    (100, 29, 4, 25),
    (50, 25, 2, 25),
    (20, 25, 1, 20),
    (12, 8, 1, 12),
])
def test_stride_gives_nearest_subgrid(L, l_star, m, size):
    run = RunConfig(L=L, l_star=l_star)
    assert run.m == m
    assert run.subgrid_size == size


def test_cutoff_scales_with_subgrid_in_use():
    assert RunConfig(L=100, l_star=30).c1 == pytest.approx(0.01 * 33 ** 2)
    assert RunConfig(L=20, l_star=25).c1 == pytest.approx(0.01 * 20 ** 2)


def test_full_grid_keeps_a_single_draw():
    assert RunConfig(L=20, B=100).draws == 1
    assert RunConfig(L=100, B=100).draws == 100


def test_full_grid_plan_covers_every_node():
    plan = full_grid_plan(regular_grid(20))
    assert plan.m == 1
    np.testing.assert_array_equal(plan.indices, np.arange(20))
    assert mode_bound(plan.l_star) == 4
    assert essential_bound(plan.l_star) == 6


@pytest.fixture
def m1_short():
    return simulate(canonical_model('M1'), no_error(), 60, regular_grid(20), seed=11)


def test_mode_on_short_grid_scans_full_grid_once(m1_short):
    vote = estimate_rank_mode(m1_short.W, m1_short.grid, 1, 50, 0.15, 10, Config.c1_for(20), seed=1)
    assert vote.B == 1
    assert vote.per_iteration == [3]
    assert vote.max_rank == 4


def test_essential_rank_on_short_grid(m1_short):
    result = essential_rank(m1_short.W, m1_short.grid, 1, 30, 0.15, 10, Config.c1_for(20), c2=50.0, seed=0)
    assert result.rank == 3
    assert len(result.scans) == 1
    assert sorted(result.medians) == list(range(1, 7))


def test_stride_must_be_positive(m1_clean):
    with pytest.raises(InvalidArgumentError):
        estimate_rank_mode(m1_clean.W, m1_clean.grid, 0, 1, 0.15, 10, C1, seed=0)


def test_unconverged_draws_give_one_warning(m1_clean, monkeypatch, caplog):
    monkeypatch.setattr(Config, "OPT_TOL", 0.0)
    monkeypatch.setattr(Config, "OPT_MAX_ITER", 1)
    with caplog.at_level("WARNING"):
        estimate_rank_mode(m1_clean.W, m1_clean.grid, 4, 3, 0.15, 3, C1, seed=0, threads=1)
    messages = [record.getMessage() for record in caplog.records if "short of tolerance" in record.getMessage()]
    assert len(messages) == 1
    assert "3 of 3 scans" in messages[0]


def _essential_or_zero(data, c1, c2):
    try:
        return essential_rank(data.W, data.grid, 4, 2, 0.15, 5, c1, c2=c2, seed=3).rank
    except NoFeasibleRankError:
        return 0


def test_essential_rank_is_monotone_in_thresholds(m1_banded):
    by_c1 = [_essential_or_zero(m1_banded, c1, 50.0) for c1 in (0.1 * C1, C1, 10 * C1)]
    by_c2 = [_essential_or_zero(m1_banded, C1, c2) for c2 in (2.0, 50.0, 1e6)]
    assert by_c1 == sorted(by_c1)
    assert by_c2 == sorted(by_c2)
    assert by_c1[1] == by_c2[1]


def _population_scree(model, multiplier):
    grid = regular_grid(25)
    K = CovMatrix(true_covariance(canonical_model(model), grid))
    return rank_scan(K, band_mask(25, 0.15), 5, Config.c1_for(25, multiplier), stop_at_cutoff=True).chosen


def test_population_scree_under_default_cutoff():
    assert _population_scree('M1', 0.01) == 3
    assert _population_scree('M2', 0.01) < 5
    assert _population_scree('M3', 0.01) < 5


def test_population_scree_under_tight_cutoff():
    assert [_population_scree(model, 1e-4) for model in ('M1', 'M2', 'M3')] == [3, 5, 5]
