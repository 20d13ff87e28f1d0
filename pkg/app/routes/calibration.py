"""Calibration API routes: simulate samples, select ranks and fit slopes over JSON"""

from flask import Blueprint, request, jsonify
from ..models.schemas import (
    FitReport,
    FitRequest,
    RankMethod,
    RankReport,
    RankRequest,
    SimulateRequest,
)
from ..services import services
from ..services.simulation_service import canonical_model, error_spec, simulate
from ..utils.errors import FuncRCError
from ..utils.grid import CurveSet, Grid, sample_adequate_grid
import logging
from pydantic import ValidationError

calibration_bp = Blueprint('calibration', __name__, url_prefix='/api')

logger = logging.getLogger(__name__)


def _error(message: str, code: int):
    return jsonify({"status": "error", "error": message}), code


def _curves(payload: RankRequest) -> CurveSet:
    return CurveSet(payload.curves, Grid(payload.grid))


def _run_config(payload: RankRequest, **overrides):
    return services.calibration_service.run_config(
        n=len(payload.curves),
        L=len(payload.grid),
        l_star=payload.l_star,
        B=payload.B,
        M=payload.M,
        c1_multiplier=payload.c1_multiplier,
        c2=payload.c2,
        delta_star=payload.delta_star,
        seed=payload.seed,
        rank_method=payload.method,
        **overrides,
    )


@calibration_bp.route('/simulate', methods=['POST'])
def simulate_sample():
    """
    Simulate one sample of a canonical model

    Expected request format:
    {"model": "M1", "error": "banded", "delta": 0.05, "n": 100, "L": 100, "seed": 2024}
    """
    try:
        data = request.get_json(force=True, silent=True) or {}
        try:
            sim_request = SimulateRequest(**data)
            spec = canonical_model(sim_request.model)
            err = error_spec(sim_request.error, delta=sim_request.delta)
        except (ValidationError, FuncRCError) as ve:
            logger.error(f"Validation error: {ve}")
            return _error(f"Invalid request data: {str(ve)}", 400)

        logger.info(f"🎲 [API] simulate {spec.name}: n={sim_request.n}, L={sim_request.L}, seed={sim_request.seed}")
        sample = simulate(spec, err, sim_request.n, sample_adequate_grid(sim_request.L, sim_request.seed),
                          sim_request.seed)
        response = {
            "status": "success",
            "grid": sample.grid.nodes.tolist(),
            "W": sample.W.data.tolist(),
            "y": sample.y.data.tolist() if isinstance(sample.y, CurveSet) else sample.y.tolist(),
        }
        if sim_request.include_truth:
            response.update({
                "X": sample.X.data.tolist(),
                "U": sample.U.data.tolist(),
                "truth": sample.truth_dict(),
            })
        return jsonify(response), 200

    except Exception as e:
        logger.error(f"❌ [API] simulate failed: {str(e)}")
        return _error("Internal server error while simulating", 500)


@calibration_bp.route('/rank', methods=['POST'])
def select_rank():
    """Rank of K_X from posted curves ({"grid": [...], "curves": [[...], ...], "method": "mode"})"""
    try:
        data = request.get_json(force=True, silent=True)
        if not data:
            return _error("No data provided", 400)
        try:
            rank_request = RankRequest(**data)
            W = _curves(rank_request)
            run = _run_config(rank_request)
            selection = services.calibration_service.select_rank(W, run)
        except (ValidationError, FuncRCError) as ve:
            logger.error(f"Validation error: {ve}")
            return _error(str(ve), 400)

        report = RankReport(
            method=rank_request.method, rank=selection.rank, l_star=run.subgrid_size,
            delta_star=run.delta_star, c1=run.c1,
            c2=run.c2 if rank_request.method == RankMethod.ESSENTIAL else None,
            B=run.draws, M=run.M, seed=run.seed, details=selection.report,
        )
        logger.info(f"✅ [API] rank {selection.rank} ({rank_request.method.value})")
        return jsonify(report.model_dump(mode='json')), 200

    except Exception as e:
        logger.error(f"❌ [API] rank selection failed: {str(e)}")
        return _error("Internal server error while selecting the rank", 500)


@calibration_bp.route('/fit', methods=['POST'])
def fit_slope():
    """Fit a slope from posted curves and scalar (y) or functional (y_curves) responses"""
    try:
        data = request.get_json(force=True, silent=True)
        if not data:
            return _error("No data provided", 400)
        try:
            fit_request = FitRequest(**data)
            W = _curves(fit_request)
            y = CurveSet(fit_request.y_curves, W.grid) if fit_request.y_curves is not None else fit_request.y
            run = _run_config(
                fit_request,
                method=fit_request.fit_method,
                known_rank=fit_request.known_rank,
                cv_reps=fit_request.cv_reps,
            )
            result = services.calibration_service.fit(W, y, run, k=fit_request.k)
        except (ValidationError, FuncRCError) as ve:
            logger.error(f"Validation error: {ve}")
            return _error(str(ve), 400)

        report = FitReport(
            method=run.method,
            response=result.response,
            rank=None if result.rank is None else result.rank.rank,
            k=result.k,
            fit=result.fit.to_dict(),
            eigenvalues=None if result.eigensystem is None else result.eigensystem.eigenvalues.tolist(),
            thresholds=result.thresholds(run),
        )
        logger.info(f"✅ [API] {run.method.value} fit in {result.runtime:.2f}s")
        return jsonify(report.model_dump(mode='json')), 200

    except Exception as e:
        logger.error(f"❌ [API] fit failed: {str(e)}")
        return _error("Internal server error while fitting", 500)
