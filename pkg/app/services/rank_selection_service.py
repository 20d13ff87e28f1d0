"""
Rank selection service
Grid subsampling with mode aggregation of scree ranks, and the essential-rank procedure
"""

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np
from scipy import linalg

from ..config.config import Config
from ..models.schemas import MIN_SUBGRID
from ..utils.errors import InvalidArgumentError, NoFeasibleRankError
from ..utils.grid import CurveSet, Grid
from .covariance_service import (
    CompletionFit,
    RankScan,
    band_mask,
    empirical_covariance,
    minimize_rank_j,
    rank_scan,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SubgridPlan:
    """Indices s_1 < ... < s_L* with s_j drawn from the block {m(j-1)+1, ..., mj}"""
    m: int
    l_star: int
    indices: np.ndarray

    def feasible_max_rank(self) -> int:
        """Largest rank r with L* >= 4(r + 1)"""
        return self.l_star // 4 - 1


class RankEstimate(NamedTuple):
    rank: int
    saturated: bool
    scan: RankScan


@dataclass
class RankVote:
    """Per-draw scree ranks and their mode"""
    per_iteration: List[int]
    mode: int
    B: int
    max_rank: int
    saturated: List[bool] = field(default_factory=list)
    scans: List[RankScan] = field(default_factory=list)

    @property
    def histogram(self) -> Dict[int, int]:
        return dict(sorted(Counter(self.per_iteration).items()))

    def to_dict(self) -> dict:
        return {
            'votes': {str(q): count for q, count in self.histogram.items()},
            'per_iteration': list(self.per_iteration),
            'mode': self.mode,
            'B': self.B,
            'max_rank': self.max_rank,
            'saturated_draws': int(sum(self.saturated)),
            'scans': [scan.to_dict() for scan in self.scans],
        }


@dataclass
class EssentialRankResult:
    """Median scree values, full-grid condition numbers and the essential rank"""
    medians: Dict[int, float]
    condition_numbers: Dict[int, float]
    rank: int
    c1: float
    c2: float
    scans: List[RankScan] = field(default_factory=list)
    full_grid_fits: Dict[int, CompletionFit] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'medians': {str(j): v for j, v in self.medians.items()},
            'condition_numbers': {str(j): v for j, v in self.condition_numbers.items()},
            'essential_rank': self.rank,
            'c1': self.c1,
            'c2': self.c2,
            'scans': [scan.to_dict() for scan in self.scans],
        }


def subsample(grid: Grid, m: int, seed: int) -> SubgridPlan:
    """
    Pick one node uniformly from each block of m consecutive grid nodes

    Raises:
        InvalidArgumentError: m <= 1, or floor(L/m) below the 4(r + 1) bound for rank 1
    """
    if m <= 1:
        raise InvalidArgumentError(f"subsampling stride m must exceed 1, got {m}")
    l_star = grid.L // m
    if l_star < MIN_SUBGRID:
        raise InvalidArgumentError(
            f"subgrid size floor({grid.L}/{m}) = {l_star} is below {MIN_SUBGRID}: "
            f"an adequate subgrid must exceed the critical value 4(r + 1) for rank r >= 1"
        )
    rng = np.random.default_rng(seed)
    offsets = rng.integers(0, m, size=l_star)
    indices = np.arange(l_star) * m + offsets
    return SubgridPlan(m=m, l_star=l_star, indices=indices)


def full_grid_plan(grid: Grid) -> SubgridPlan:
    """Stride-1 plan covering every node, used when the grid is too small to subsample"""
    return SubgridPlan(m=1, l_star=grid.L, indices=np.arange(grid.L))


def _plan_for(grid: Grid, m: int, seed: int) -> SubgridPlan:
    return full_grid_plan(grid) if m == 1 else subsample(grid, m, seed)


def _draws_for(m: int, B: int) -> int:
    """Stride 1 has a single possible subgrid, so B draws collapse to one"""
    if m == 1 and B > 1:
        logger.info(f"📏 [RANK] stride 1 uses the full grid; {B} draws collapse to 1")
        return 1
    return B


def mode_bound(l_star: int) -> int:
    """floor(L*/4 - 1): largest rank identifiable on a subgrid of size L*"""
    return int(math.floor(l_star / 4 - 1))


def essential_bound(l_star: int) -> int:
    """floor(L*/4 + 1): scan range of the essential-rank procedure"""
    return int(math.floor(l_star / 4 + 1))


def _effective_max_rank(M: int, bound: int) -> int:
    if M < 1:
        raise InvalidArgumentError(f"maximal rank M must be positive, got {M}")
    if bound < 1:
        raise InvalidArgumentError("subgrid too small to identify any rank")
    if M > bound:
        logger.warning(f"⚠️ [RANK] M = {M} exceeds the identifiable bound {bound}; scanning j <= {bound}")
    return min(M, bound)


def _subgrid_covariance(W: CurveSet, plan: SubgridPlan):
    return empirical_covariance(W.restrict(plan.indices))


def estimate_rank_once(W: CurveSet, plan: SubgridPlan, delta_star: float, M: int, c1: float,
                       seed: int = 0) -> RankEstimate:
    """
    Scree rank on one subgrid: covariance on the plan indices, masked fits j = 1..M, first f(j) <= c1

    Returns M flagged saturated when no rank passes the cutoff.
    """
    max_rank = _effective_max_rank(M, mode_bound(plan.l_star))
    Khat = _subgrid_covariance(W, plan)
    mask = band_mask(plan.l_star, delta_star)
    scan = rank_scan(Khat, mask, max_rank, c1, seed=seed, stop_at_cutoff=True)
    if scan.chosen is None:
        logger.warning(f"⚠️ [RANK] scree saturated: no j <= {max_rank} with f(j) <= {c1:.4g}")
        return RankEstimate(rank=max_rank, saturated=True, scan=scan)
    return RankEstimate(rank=scan.chosen, saturated=False, scan=scan)


def _report_unconverged(scans: List[RankScan], label: str) -> None:
    """One warning per rank selection naming how many scans left a rank short of tolerance"""
    failing = [scan.unconverged for scan in scans if scan.unconverged]
    if failing:
        ranks = sorted({j for unconverged in failing for j in unconverged})
        logger.warning(
            f"⚠️ [RANK] {label}: {len(failing)} of {len(scans)} scans stopped short of tolerance at ranks {ranks}"
        )


def _mode(votes: List[int]) -> int:
    counts = Counter(votes)
    top = max(counts.values())
    return min(q for q, count in counts.items() if count == top)


def _run_draws(task, B: int, threads: Optional[int]):
    threads = Config.THREADS if threads is None else threads
    if threads <= 1 or B <= 1:
        return [task(b) for b in range(B)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, range(B)))


def estimate_rank_mode(W: CurveSet, grid: Grid, m: int, B: int, delta_star: float, M: int, c1: float,
                       seed: int, threads: Optional[int] = None) -> RankVote:
    """
    Mode of B subgrid scree ranks; draw b uses seed + b, ties go to the smaller rank

    Args:
        W: observed curves on grid
        grid: full observation grid
        m: subsampling stride, L* = floor(L/m); 1 scans the full grid once
        B: number of subgrid draws
        delta_star: band fraction of the subgrid mask
        M: largest rank scanned (capped at floor(L*/4 - 1))
        c1: scree cutoff
        seed: base seed
        threads: worker count, defaults to Config.THREADS

    Returns:
        RankVote with the per-draw ranks and their mode
    """
    if B < 1:
        raise InvalidArgumentError(f"number of draws B must be at least 1, got {B}")
    if not grid.matches(W.grid):
        raise InvalidArgumentError("curves are not observed on the given grid")
    if m < 1:
        raise InvalidArgumentError(f"subsampling stride m must be at least 1, got {m}")
    B = _draws_for(m, B)
    max_rank = _effective_max_rank(M, mode_bound(grid.L // m))

    def draw(b: int) -> RankEstimate:
        plan = _plan_for(grid, m, seed + b)
        return estimate_rank_once(W, plan, delta_star, max_rank, c1, seed=seed + b)

    estimates = _run_draws(draw, B, threads)
    _report_unconverged([estimate.scan for estimate in estimates], "mode vote")
    votes = [estimate.rank for estimate in estimates]
    mode = _mode(votes)
    logger.info(f"📊 [RANK] {B} draws on L* = {grid.L // m}: votes {dict(Counter(votes))}, mode {mode}")
    return RankVote(
        per_iteration=votes,
        mode=mode,
        B=B,
        max_rank=max_rank,
        saturated=[estimate.saturated for estimate in estimates],
        scans=[estimate.scan for estimate in estimates],
    )


def condition_number(fit: CompletionFit) -> float:
    """Ratio of the largest to the smallest of the j leading eigenvalues of a rank-j fit"""
    j = fit.factor.rank
    values = linalg.eigvalsh(fit.factor.gram())[::-1][:j]
    if values[-1] <= 0:
        return math.inf
    return float(values[0] / values[-1])


def essential_rank(W: CurveSet, grid: Grid, m: int, B: int, delta_star: float, M: int,
                   c1: float, c2: float, seed: int, threads: Optional[int] = None,
                   full_delta_star: Optional[float] = None) -> EssentialRankResult:
    """
    Essential rank max{j : median_b f_b(j) <= c1, a_j <= c2}

    Medians come from B subgrid scans over j = 1..min(M, floor(L*/4 + 1)); condition numbers
    a_j come from rank-j masked fits on the full grid.

    Raises:
        NoFeasibleRankError: when no j passes both thresholds (diagnostics attached)
    """
    if c2 <= 1:
        raise InvalidArgumentError(f"condition-number cap c2 must exceed 1, got {c2}")
    if B < 1:
        raise InvalidArgumentError(f"number of draws B must be at least 1, got {B}")
    if not grid.matches(W.grid):
        raise InvalidArgumentError("curves are not observed on the given grid")
    if m < 1:
        raise InvalidArgumentError(f"subsampling stride m must be at least 1, got {m}")
    B = _draws_for(m, B)
    l_star = grid.L // m
    max_rank = _effective_max_rank(M, essential_bound(l_star))

    def draw(b: int) -> RankScan:
        plan = _plan_for(grid, m, seed + b)
        Khat = _subgrid_covariance(W, plan)
        return rank_scan(Khat, band_mask(plan.l_star, delta_star), max_rank, c1, seed=seed + b)

    scans = _run_draws(draw, B, threads)
    medians = {
        j: float(np.median([scan.objectives[j] for scan in scans]))
        for j in range(1, max_rank + 1)
    }

    full_mask = band_mask(grid.L, delta_star if full_delta_star is None else full_delta_star)
    full_scan = rank_scan(empirical_covariance(W), full_mask, max_rank, c1, seed=seed)
    conditions = {j: condition_number(fit) for j, fit in full_scan.fits.items()}
    _report_unconverged([*scans, full_scan], "essential rank")

    feasible = [j for j in medians if medians[j] <= c1 and conditions[j] <= c2]
    if not feasible:
        diagnostics = {
            'medians': {str(j): v for j, v in medians.items()},
            'condition_numbers': {str(j): v for j, v in conditions.items()},
            'c1': c1,
            'c2': c2,
        }
        raise NoFeasibleRankError(f"no rank j <= {max_rank} passes c1 = {c1:.4g} and c2 = {c2:.4g}", diagnostics)

    rank = max(feasible)
    logger.info(f"📊 [RANK] essential rank {rank} (c1 = {c1:.4g}, c2 = {c2:.4g})")
    return EssentialRankResult(
        medians=medians,
        condition_numbers=conditions,
        rank=rank,
        c1=c1,
        c2=c2,
        scans=scans,
        full_grid_fits=full_scan.fits,
    )
