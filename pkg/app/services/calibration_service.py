"""
Calibration service
End-to-end regression calibration: rank selection on subgrids, full-grid masked completion of K_X,
its eigensystem, and the slope estimators built on it
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Union

import numpy as np

from ..config.config import Config
from ..models.schemas import FitMethod, RankMethod, ResponseKind, RunConfig
from ..utils.errors import InvalidArgumentError
from ..utils.grid import CurveSet
from .covariance_service import CompletionFit, CovMatrix, band_mask, empirical_covariance, minimize_rank_j
from .operator_service import EigenSystem, KernelEstimate, kernel_eigen
from .rank_selection_service import essential_rank, estimate_rank_mode
from .regression_service import (
    Fit,
    as_scalar_response,
    cross_cov_quadratic,
    cross_cov_scalar,
    cv_select_components,
    rc_functional,
    rc_quadratic,
    rc_scalar,
    spectral_truncation,
)

logger = logging.getLogger(__name__)


@dataclass
class RankSelection:
    """Selected rank and the report of the procedure that produced it"""
    method: RankMethod
    rank: int
    report: Dict[str, Any] = field(default_factory=dict)
    completion: Optional[CompletionFit] = None


@dataclass
class CalibrationResult:
    """Everything a fit run produces"""
    method: FitMethod
    response: ResponseKind
    fit: Fit
    rank: Optional[RankSelection] = None
    eigensystem: Optional[EigenSystem] = None
    kernel: Optional[KernelEstimate] = None
    k: Optional[int] = None
    cv_errors: Optional[Dict[int, float]] = None
    runtime: float = 0.0

    def thresholds(self, run: RunConfig) -> Dict[str, Any]:
        return {
            'l_star': run.subgrid_size,
            'delta_star': run.delta_star,
            'full_delta_star': run.full_delta_star if run.full_delta_star is not None else run.delta_star,
            'c1': run.c1,
            'c2': run.c2,
            'B': run.draws,
            'M': run.M,
            'seed': run.seed,
        }


class CalibrationService:
    """Service running the calibration pipeline for the CLI and the HTTP routes"""

    def __init__(self, config: Config):
        self.config = config

    # ========== RANK ==========

    def select_rank(self, W: CurveSet, run: RunConfig) -> RankSelection:
        """Rank by the mode of subgrid votes, the essential-rank rule, or a known value"""
        if run.rank_method == RankMethod.KNOWN:
            return RankSelection(method=RankMethod.KNOWN, rank=run.known_rank, report={'rank': run.known_rank})

        if run.rank_method == RankMethod.ESSENTIAL:
            result = essential_rank(
                W, W.grid, run.m, run.B, run.delta_star, run.M, run.c1, run.c2,
                seed=run.seed, threads=run.threads, full_delta_star=run.full_delta_star,
            )
            return RankSelection(
                method=RankMethod.ESSENTIAL,
                rank=result.rank,
                report=result.to_dict(),
                completion=result.full_grid_fits.get(result.rank),
            )

        vote = estimate_rank_mode(
            W, W.grid, run.m, run.B, run.delta_star, run.M, run.c1,
            seed=run.seed, threads=run.threads,
        )
        return RankSelection(method=RankMethod.MODE, rank=vote.mode, report=vote.to_dict())

    # ========== COVARIANCE ==========

    def complete_covariance(self, W: CurveSet, rank: int, run: RunConfig,
                            warm: Optional[CompletionFit] = None) -> CompletionFit:
        """Rank-r masked completion of the empirical covariance on the full grid"""
        delta = run.full_delta_star if run.full_delta_star is not None else run.delta_star
        Khat = empirical_covariance(W)
        fit = minimize_rank_j(
            Khat, band_mask(W.L, delta), rank,
            seed=run.seed, init=None if warm is None else warm.factor.theta,
        )
        logger.info(f"🧮 [FIT] rank-{rank} completion on {W.L} nodes: f = {fit.objective:.4g}, converged = {fit.converged}")
        if not fit.converged:
            logger.warning(f"⚠️ [FIT] full-grid completion stopped with gradient norm {fit.gradient_norm:.3e}")
        return fit

    def estimate_kx(self, W: CurveSet, run: RunConfig) -> tuple:
        """(rank selection, completion fit, eigensystem) of K_X"""
        selection = self.select_rank(W, run)
        completion = self.complete_covariance(W, selection.rank, run, warm=selection.completion)
        es = kernel_eigen(completion.factor.to_cov(), W.grid, selection.rank)
        return selection, completion, es

    # ========== FITS ==========

    def fit(self, W: CurveSet, y: Union[np.ndarray, CurveSet], run: RunConfig,
            k: Optional[int] = None) -> CalibrationResult:
        """
        Fit the slope with run.method

        Args:
            W: observed covariate curves
            y: scalar responses or response curves
            run: validated run parameters
            k: spectral truncation cutoff; cross-validated over 1..k_max when absent

        Returns:
            CalibrationResult
        """
        started = time.perf_counter()
        functional = isinstance(y, CurveSet)
        response = ResponseKind.FUNCTIONAL if functional else ResponseKind.SCALAR
        if functional and y.n != W.n:
            raise InvalidArgumentError(f"{y.n} response curves for {W.n} covariate curves")
        if not functional:
            y = as_scalar_response(y, W.n)

        if run.method == FitMethod.ST:
            cv_errors = None
            if k is None:
                cv = cv_select_components(
                    W, y, range(1, run.k_max + 1), folds=run.cv_folds, reps=run.cv_reps,
                    seed=run.seed, threads=run.threads, return_table=True,
                )
                k, cv_errors = cv.chosen, cv.errors
            fit = spectral_truncation(W, y, k)
            result = CalibrationResult(method=run.method, response=response, fit=fit, k=k, cv_errors=cv_errors)
        else:
            if run.method == FitMethod.RC_QUADRATIC and functional:
                raise InvalidArgumentError("the quadratic estimator needs a scalar response")
            selection, completion, es = self.estimate_kx(W, run)
            if functional:
                fit = rc_functional(es, y, W)
            elif run.method == FitMethod.RC_QUADRATIC:
                fit = rc_quadratic(
                    es, cross_cov_scalar(y, W), cross_cov_quadratic(y, W),
                    published_coefficients=run.published_coefficients,
                    y_bar=float(y.mean()), w_bar=W.mean(), ww_bar=W.data.T @ W.data / W.n,
                )
            else:
                fit = rc_scalar(es, cross_cov_scalar(y, W), float(y.mean()), W.mean())
            result = CalibrationResult(
                method=run.method, response=response, fit=fit, rank=selection,
                eigensystem=es, kernel=KernelEstimate(completion.factor.to_cov(), W.grid),
            )

        result.runtime = time.perf_counter() - started
        logger.info(f"✅ [FIT] {run.method.value} ({response.value}) in {result.runtime:.2f}s")
        return result

    # ========== DIAGNOSTICS ==========

    @staticmethod
    def decontaminate(W: CurveSet, es: EigenSystem) -> CurveSet:
        """W_bar plus the projection of each centered curve onto span{eta_j}"""
        if not es.grid.matches(W.grid):
            raise InvalidArgumentError("eigensystem and curves live on different grids")
        return CurveSet(W.mean() + es.project(W.centered()), W.grid)

    @staticmethod
    def error_variance(W: CurveSet, Kx: Union[CovMatrix, KernelEstimate]) -> np.ndarray:
        """Pointwise measurement-error variances diag(K_W - K_X), clipped at zero"""
        if isinstance(Kx, KernelEstimate):
            Kx = Kx.matrix
        Kw = empirical_covariance(W)
        if Kx.L != Kw.L:
            raise InvalidArgumentError(f"K_X of size {Kx.L} does not match curves on {Kw.L} nodes")
        return np.clip(np.diag(Kw.entries) - np.diag(Kx.entries), 0.0, None)

    def run_config(self, **overrides) -> RunConfig:
        """RunConfig with Config defaults under the given overrides"""
        defaults = dict(
            n=self.config.N,
            L=self.config.L,
            l_star=self.config.L_STAR,
            B=self.config.B,
            M=self.config.M,
            c1_multiplier=self.config.C1_MULTIPLIER,
            c2=self.config.C2,
            delta_star=self.config.DELTA_STAR,
            cv_reps=self.config.CV_REPS,
            cv_folds=self.config.CV_FOLDS,
            k_max=self.config.K_MAX,
            seed=self.config.SEED,
            threads=self.config.THREADS,
        )
        defaults.update({key: value for key, value in overrides.items() if value is not None})
        return RunConfig(**defaults)
