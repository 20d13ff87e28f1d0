"""
Study service
Replicated simulate-and-fit comparisons (per-replicate rows, median summaries, rate slopes) and
the real-data style analysis of a covariate / response pair
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..config.config import Config
from ..models.schemas import ErrorKind, FitMethod, RankMethod, RunConfig, StudyRow
from ..utils.errors import FuncRCError, InvalidArgumentError
from ..utils.grid import CurveSet, sample_adequate_grid
from .calibration_service import CalibrationService
from .regression_service import QuadraticFit, l2_distance, predict, r_squared
from .simulation_service import canonical_model, error_spec, simulate

logger = logging.getLogger(__name__)

STUDY_COLUMNS = list(StudyRow.model_fields)


@dataclass
class Scenario:
    """One cell of a comparison study"""
    model: str
    error: ErrorKind
    delta: Optional[float]
    n: int

    @property
    def label(self) -> str:
        delta = f", delta={self.delta}" if self.error == ErrorKind.BANDED else ""
        return f"{self.model} ({self.error.value}{delta}, n={self.n})"


@dataclass
class StudyResult:
    rows: pd.DataFrame
    summary: Dict[str, Any]


def _true_rank(model: str) -> int:
    """Rank the selection should recover: r for M1-M3, the essential rank (4, 6, 6) for M4-M6"""
    spec = canonical_model(model)
    if spec.rank > 5:
        return 4 if model == 'M4' else 6
    return spec.rank


def log_log_slope(n_values: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(n)"""
    n_values = np.asarray(n_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if n_values.size < 2 or np.unique(n_values).size < 2:
        raise InvalidArgumentError("a rate slope needs at least two distinct sample sizes")
    slope, _ = np.polyfit(np.log(n_values), np.log(errors), 1)
    return float(slope)


class StudyService:
    """Service running replicated comparison studies and data analyses"""

    def __init__(self, config: Config, calibration: Optional[CalibrationService] = None):
        self.config = config
        self.calibration = calibration or CalibrationService(config)

    # ========== COMPARISON ==========

    def _replicate(self, scenario: Scenario, methods: Sequence[FitMethod], run: RunConfig,
                   seed: int) -> List[Dict[str, Any]]:
        grid = sample_adequate_grid(run.L, seed)
        err = error_spec(scenario.error, delta=scenario.delta or run.delta, variance=run.iid_variance)
        data = simulate(canonical_model(scenario.model), err, scenario.n, grid, seed)
        rows = []
        for method in methods:
            method_run = run.model_copy(update={'method': method, 'seed': seed, 'threads': 1})
            started = time.perf_counter()
            try:
                result = self.calibration.fit(data.W, data.y, method_run)
                fit = result.fit.linear if isinstance(result.fit, QuadraticFit) else result.fit
                error = l2_distance(fit.beta, data.beta, grid)
                chosen = int(result.k if method == FitMethod.ST else result.rank.rank)
            except FuncRCError as e:
                logger.warning(f"⚠️ [STUDY] {scenario.label} seed {seed} {method.value} failed: {e}")
                error, chosen = float('nan'), None
            rows.append(StudyRow(
                model=scenario.model,
                error=scenario.error,
                delta=scenario.delta if scenario.error == ErrorKind.BANDED else None,
                method=method,
                seed=seed,
                n=scenario.n,
                rank_chosen=chosen,
                true_rank=_true_rank(scenario.model),
                l2_error=error,
                runtime=time.perf_counter() - started,
            ).model_dump())
        return rows

    def compare(self, models: Sequence[str], errors: Sequence[ErrorKind], deltas: Sequence[float],
                n_values: Sequence[int], methods: Sequence[FitMethod], replicates: int,
                run: RunConfig) -> StudyResult:
        """
        Replicated comparison over every (model, error, delta, n) cell

        Replicate b of every cell uses seed run.seed + b for its grid, sample and fits, so
        methods are compared on identical data. Replicates run on run.threads workers.

        Returns:
            StudyResult with one row per (cell, replicate, method) and a summary of medians
        """
        if replicates < 1:
            raise InvalidArgumentError(f"number of replicates must be positive, got {replicates}")
        scenarios = []
        for model in models:
            for kind in errors:
                kind = ErrorKind(kind)
                for delta in (deltas if kind == ErrorKind.BANDED else [None]):
                    for n in n_values:
                        scenarios.append(Scenario(model=model.upper(), error=kind, delta=delta, n=int(n)))

        tasks = [(scenario, run.seed + b) for scenario in scenarios for b in range(replicates)]
        logger.info(f"🧪 [STUDY] {len(scenarios)} cells x {replicates} replicates x {len(methods)} methods")

        def work(task):
            scenario, seed = task
            return self._replicate(scenario, methods, run, seed)

        if run.threads > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=run.threads) as pool:
                batches = list(pool.map(work, tasks))
        else:
            batches = [work(task) for task in tasks]

        rows = pd.DataFrame([row for batch in batches for row in batch], columns=STUDY_COLUMNS)
        return StudyResult(rows=rows, summary=self.summarize(rows))

    @staticmethod
    def summarize(rows: pd.DataFrame) -> Dict[str, Any]:
        """Median error and runtime per cell, rank recovery rate, and log-log rate slopes"""
        keys = ['model', 'error', 'delta', 'method', 'n']
        cells = []
        for key, group in rows.groupby(keys, dropna=False, sort=True):
            model, error, delta, method, n = key
            recovered = group['rank_chosen'] == group['true_rank']
            cells.append({
                'model': model,
                'error': error,
                'delta': None if pd.isna(delta) else float(delta),
                'method': method,
                'n': int(n),
                'replicates': int(len(group)),
                'median_l2_error': float(group['l2_error'].median()),
                'median_runtime': float(group['runtime'].median()),
                'rank_recovery_rate': float(recovered.mean()),
                'ranks': {str(int(q)): int(c) for q, c in group['rank_chosen'].dropna().value_counts().sort_index().items()},
            })

        slopes = []
        frame = pd.DataFrame(cells)
        if not frame.empty and frame['n'].nunique() > 1:
            for key, group in frame.groupby(['model', 'error', 'delta', 'method'], dropna=False, sort=True):
                if group['n'].nunique() < 2 or not np.all(group['median_l2_error'] > 0):
                    continue
                model, error, delta, method = key
                slopes.append({
                    'model': model,
                    'error': error,
                    'delta': None if pd.isna(delta) else float(delta),
                    'method': method,
                    'n': group['n'].tolist(),
                    'log_log_slope': log_log_slope(group['n'], group['median_l2_error']),
                })
        return {'cells': cells, 'rate_slopes': slopes}

    # ========== ANALYSIS ==========

    def analyze(self, W: CurveSet, y: Union[np.ndarray, CurveSet], run: RunConfig) -> Dict[str, Any]:
        """
        Essential-rank calibration fit and the spectral truncation baseline on one dataset

        Returns:
            report with both fits, in-sample R^2, the decontaminated covariates and
            pointwise error-variance estimates
        """
        essential = run.model_copy(update={'rank_method': RankMethod.ESSENTIAL, 'method': FitMethod.RC})
        rc = self.calibration.fit(W, y, essential)
        st = self.calibration.fit(W, y, run.model_copy(update={'method': FitMethod.ST}))

        actual = y.data if isinstance(y, CurveSet) else y
        r2_rc = r_squared(actual, predict(rc.fit, W))
        r2_st = r_squared(actual, predict(st.fit, W))
        logger.info(
            f"📈 [STUDY] essential rank {rc.rank.rank}, spectral cut-off {st.k}: "
            f"R^2 RC {r2_rc:.3f}, R^2 ST {r2_st:.3f} (delta* = {run.delta_star})"
        )
        return {
            'delta_star': run.delta_star,
            'essential_rank': rc.rank.rank,
            'rank_report': rc.rank.report,
            'spectral_cutoff': st.k,
            'cv_errors': st.cv_errors,
            'r_squared': {'rc': r2_rc, 'st': r2_st},
            'rc_fit': rc.fit,
            'st_fit': st.fit,
            'eigenvalues': rc.eigensystem.eigenvalues.tolist(),
            'decontaminated': self.calibration.decontaminate(W, rc.eigensystem),
            'error_variance': self.calibration.error_variance(W, rc.kernel),
        }
