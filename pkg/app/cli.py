"""
FuncRC command line
Simulate scenarios, select ranks, fit and apply slopes, run comparison studies and analyze
user-supplied curve data. Output is figure data only (CSV / JSON).
"""

import functools
import json
import logging
from pathlib import Path
from typing import Optional

import click
import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from app.config.config import Config
from app.models.schemas import (
    ErrorKind,
    FitMethod,
    FitReport,
    ModelSpec,
    RankMethod,
    RankReport,
    ResponseKind,
)
from app.services import services
from app.services.regression_service import (
    QuadraticFit,
    SlopeFunction,
    SlopeOperator,
    fit_from_dict,
    l2_distance,
    predict,
    r_squared,
)
from app.services.simulation_service import canonical_model, error_spec, simulate
from app.utils import csv_io
from app.utils.errors import FuncRCError, InvalidArgumentError
from app.utils.grid import CurveSet, Grid, sample_adequate_grid

logger = logging.getLogger(__name__)


def handle_errors(command):
    """Domain, validation and IO errors become a one-line message and exit code 1"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (FuncRCError, ValidationError, OSError) as e:
            logger.debug("[CLI] command failed", exc_info=True)
            raise click.ClickException(str(e)) from e
    return wrapper


def _load_config(ctx: click.Context, param, value):
    """--config file.json supplies per-command defaults: {"rank": {"B": 50}, ...}"""
    if value is None:
        return None
    try:
        with open(value, "r") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise click.BadParameter(f"cannot read config {value}: {e}") from e
    if not isinstance(data, dict):
        raise click.BadParameter("config must be a JSON object keyed by command name")
    ctx.default_map = {**(ctx.default_map or {}), **data}
    return value


def _emit(payload, out: Optional[str]):
    if out:
        csv_io.write_json(out, payload)
        click.echo(f"📝 wrote {out}")
    else:
        click.echo(csv_io.dumps(payload))


def _run_config(**overrides):
    return services.calibration_service.run_config(**overrides)


def _slope_files(out: Path, fit) -> list:
    """beta.csv and / or kernel.csv for a fitted slope"""
    written = []
    if isinstance(fit, SlopeFunction):
        csv_io.write_matrix(out / "beta.csv", np.vstack([fit.grid.nodes, fit.beta]))
        written.append("beta.csv")
    elif isinstance(fit, QuadraticFit):
        csv_io.write_matrix(out / "beta.csv", np.vstack([fit.linear.grid.nodes, fit.linear.beta]))
        csv_io.write_matrix(out / "kernel.csv", fit.quadratic.kernel)
        written += ["beta.csv", "kernel.csv"]
    elif isinstance(fit, SlopeOperator):
        csv_io.write_matrix(out / "kernel.csv", fit.kernel)
        written.append("kernel.csv")
    return written


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False, help="JSON file of per-command defaults")
@click.option("--log-level", default=None, help="Logging level (default FUNCRC_LOG_LEVEL)")
def cli(log_level):
    """Regression calibration for functional regression with banded measurement error"""
    load_dotenv()
    Config.init_logging(log_level)


# ========== SIMULATE ==========

@cli.command("simulate")
@click.option("--model", default="M1", show_default=True, help="Canonical model M1..M6")
@click.option("--model-spec", type=click.Path(exists=True, dir_okay=False), default=None,
              help="ModelSpec JSON replacing --model")
@click.option("--error", "error_kind", type=click.Choice([k.value for k in ErrorKind]), default="banded", show_default=True)
@click.option("--delta", type=float, default=0.05, show_default=True, help="Bandwidth of the banded error")
@click.option("--iid-variance", type=float, default=0.25, show_default=True)
@click.option("--n", type=int, default=Config.N, show_default=True)
@click.option("--L", "L", type=int, default=Config.L, show_default=True)
@click.option("--seed", type=int, default=Config.SEED, show_default=True)
@click.option("--latent/--no-latent", default=True, show_default=True, help="Also write X.csv and U.csv")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@handle_errors
def cmd_simulate(model, model_spec, error_kind, delta, iid_variance, n, L, seed, latent, out):
    """Write W.csv, y.csv, truth.json (and X.csv, U.csv) for one simulated sample"""
    if model_spec:
        spec = ModelSpec(**csv_io.read_json(model_spec))
    else:
        spec = canonical_model(model)
    err = error_spec(error_kind, delta=delta, variance=iid_variance)
    data = simulate(spec, err, n, sample_adequate_grid(L, seed), seed)

    out = Path(out)
    csv_io.write_curves(out / "W.csv", data.W)
    if isinstance(data.y, CurveSet):
        csv_io.write_curves(out / "y.csv", data.y)
    else:
        csv_io.write_scalar_response(out / "y.csv", data.y)
    if latent:
        csv_io.write_curves(out / "X.csv", data.X)
        csv_io.write_curves(out / "U.csv", data.U)
    csv_io.write_json(out / "truth.json", data.truth_dict())
    click.echo(f"🎲 {spec.name or spec.basis_family.value}: {n} curves on {L} nodes ({err.kind.value}) -> {out}")


# ========== RANK ==========

def rank_options(command):
    options = [
        click.option("--l-star", type=int, default=Config.L_STAR, show_default=True, help="Subgrid size L*"),
        click.option("--B", "B", type=int, default=Config.B, show_default=True, help="Subgrid draws"),
        click.option("--M", "M", type=int, default=Config.M, show_default=True, help="Largest rank scanned"),
        click.option("--c1-multiplier", type=float, default=Config.C1_MULTIPLIER, show_default=True,
                     help="Scree cutoff c1 = multiplier * L*^2"),
        click.option("--c2", type=float, default=Config.C2, show_default=True, help="Condition-number cap"),
        click.option("--delta-star", type=float, default=Config.DELTA_STAR, show_default=True),
        click.option("--full-delta-star", type=float, default=None, help="Band fraction on the full grid"),
        click.option("--seed", type=int, default=Config.SEED, show_default=True),
        click.option("--threads", type=int, default=Config.THREADS, show_default=True),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@cli.command("rank")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--essential", is_flag=True, help="Essential rank instead of the mode of votes")
@rank_options
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report path (stdout when absent)")
@handle_errors
def cmd_rank(input_path, essential, l_star, B, M, c1_multiplier, c2, delta_star, full_delta_star,
             seed, threads, out):
    """Select the rank of K_X from a covariate curve file"""
    W = csv_io.read_curves(input_path)
    method = RankMethod.ESSENTIAL if essential else RankMethod.MODE
    run = _run_config(rank_method=method, n=W.n, L=W.L, l_star=l_star, B=B, M=M,
                      c1_multiplier=c1_multiplier, c2=c2, delta_star=delta_star,
                      full_delta_star=full_delta_star, seed=seed, threads=threads)
    selection = services.calibration_service.select_rank(W, run)
    report = RankReport(
        method=method, rank=selection.rank, l_star=run.subgrid_size, delta_star=delta_star,
        c1=run.c1, c2=c2 if essential else None, B=run.draws, M=M, seed=seed, details=selection.report,
    )
    click.echo(f"📊 {method.value} rank: {selection.rank}", err=bool(not out))
    _emit(report.model_dump(mode="json"), out)


# ========== FIT ==========

@cli.command("fit")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--response", "response_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--method", type=click.Choice([m.value for m in FitMethod]), default="rc", show_default=True)
@click.option("--rank-method", type=click.Choice([m.value for m in RankMethod]), default="mode", show_default=True)
@click.option("--rank", "known_rank", type=int, default=None, help="Rank for --rank-method known")
@click.option("--k", type=int, default=None, help="Spectral truncation cutoff (cross-validated when absent)")
@click.option("--k-max", type=int, default=Config.K_MAX, show_default=True)
@click.option("--cv-reps", type=int, default=Config.CV_REPS, show_default=True)
@click.option("--published-coefficients", is_flag=True, help="Published var(X x X) inverse coefficients")
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), default=None)
@rank_options
@click.option("--out", type=click.Path(file_okay=False), required=True)
@handle_errors
def cmd_fit(input_path, response_path, method, rank_method, known_rank, k, k_max, cv_reps,
            published_coefficients, truth_path, l_star, B, M, c1_multiplier, c2, delta_star,
            full_delta_star, seed, threads, out):
    """Fit a slope and write fit.json with beta.csv or kernel.csv"""
    W = csv_io.read_curves(input_path)
    y = csv_io.read_response(response_path, W.grid)
    truth = csv_io.read_json(truth_path) if truth_path else None
    if truth is not None and not Grid(truth["grid"]).matches(W.grid):
        raise InvalidArgumentError(f"{truth_path} was generated on a different grid than {input_path}")

    run = _run_config(method=FitMethod(method), rank_method=RankMethod(rank_method), known_rank=known_rank,
                      n=W.n, L=W.L, l_star=l_star, B=B, M=M, c1_multiplier=c1_multiplier, c2=c2,
                      delta_star=delta_star, full_delta_star=full_delta_star, k_max=k_max,
                      cv_reps=cv_reps, published_coefficients=published_coefficients, seed=seed, threads=threads)
    result = services.calibration_service.fit(W, y, run, k=k)

    l2_error = None
    if truth is not None and truth.get("beta") is not None:
        fit = result.fit.linear if isinstance(result.fit, QuadraticFit) else result.fit
        if isinstance(fit, SlopeFunction):
            l2_error = l2_distance(fit.beta, np.asarray(truth["beta"]), W.grid)
            click.echo(f"📏 L2 error vs truth: {l2_error:.6g}")

    report = FitReport(
        method=run.method,
        response=result.response,
        rank=None if result.rank is None else result.rank.rank,
        k=result.k,
        fit=result.fit.to_dict(),
        eigenvalues=None if result.eigensystem is None else result.eigensystem.eigenvalues.tolist(),
        thresholds={**result.thresholds(run), 'cv_errors': result.cv_errors},
        l2_error=l2_error,
    )
    out = Path(out)
    csv_io.write_json(out / "fit.json", report.model_dump(mode="json"))
    written = _slope_files(out, result.fit)
    chosen = f"k = {result.k}" if result.k is not None else f"rank = {result.rank.rank}"
    click.echo(f"✅ {method} fit ({chosen}) -> {out} [fit.json, {', '.join(written)}]")


# ========== PREDICT ==========

@cli.command("predict")
@click.option("--fit", "fit_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--response", "response_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Observed responses; reports R^2")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@handle_errors
def cmd_predict(fit_path, input_path, response_path, out):
    """Apply a saved fit to covariate curves"""
    payload = csv_io.read_json(fit_path)
    fit = fit_from_dict(payload.get("fit", payload))
    W = csv_io.read_curves(input_path)
    predicted = predict(fit, W)
    if isinstance(fit, SlopeOperator) and fit.response_grid is not None:
        csv_io.write_curves(out, CurveSet(predicted, fit.response_grid))
    elif predicted.ndim == 2:
        csv_io.write_curves(out, CurveSet(predicted, W.grid))
    else:
        csv_io.write_scalar_response(out, predicted, column="y_hat")
    click.echo(f"📝 wrote {out}")
    if response_path:
        actual = csv_io.read_response(response_path)
        r2 = r_squared(actual, predicted)
        click.echo(f"📈 R^2 = {r2:.6f}")


# ========== COMPARE ==========

@cli.command("compare")
@click.option("--model", "models", multiple=True, default=["M1"], show_default=True)
@click.option("--error", "errors", multiple=True, type=click.Choice([k.value for k in ErrorKind]),
              default=["banded"], show_default=True)
@click.option("--delta", "deltas", multiple=True, type=float, default=[0.05], show_default=True)
@click.option("--n", "n_values", multiple=True, type=int, default=[Config.N], show_default=True)
@click.option("--method", "methods", multiple=True, type=click.Choice([m.value for m in FitMethod]),
              default=["rc", "st"], show_default=True)
@click.option("--replicates", type=int, default=20, show_default=True)
@click.option("--L", "L", type=int, default=Config.L, show_default=True)
@click.option("--iid-variance", type=float, default=0.25, show_default=True)
@click.option("--rank-method", type=click.Choice([m.value for m in RankMethod]), default="mode", show_default=True)
@click.option("--rank", "known_rank", type=int, default=None)
@click.option("--k-max", type=int, default=Config.K_MAX, show_default=True)
@click.option("--cv-reps", type=int, default=Config.CV_REPS, show_default=True)
@rank_options
@click.option("--out", type=click.Path(file_okay=False), required=True)
@handle_errors
def cmd_compare(models, errors, deltas, n_values, methods, replicates, L, iid_variance, rank_method,
                known_rank, k_max, cv_reps, l_star, B, M, c1_multiplier, c2, delta_star,
                full_delta_star, seed, threads, out):
    """Replicated simulate-and-fit study; writes study.csv and summary.json"""
    run = _run_config(L=L, iid_variance=iid_variance, rank_method=RankMethod(rank_method),
                      known_rank=known_rank, k_max=k_max, cv_reps=cv_reps, l_star=l_star, B=B, M=M,
                      c1_multiplier=c1_multiplier, c2=c2, delta_star=delta_star,
                      full_delta_star=full_delta_star, seed=seed, threads=threads)
    study = services.study_service.compare(
        models, errors, deltas, n_values, [FitMethod(m) for m in methods], replicates, run,
    )
    out = Path(out)
    csv_io.write_table(out / "study.csv", study.rows)
    csv_io.write_json(out / "summary.json", study.summary)
    for cell in study.summary["cells"]:
        click.echo(
            f"🧪 {cell['model']} {cell['error']} delta={cell['delta']} n={cell['n']} {cell['method']}: "
            f"median L2 {cell['median_l2_error']:.4g}, ranks {cell['ranks']}"
        )
    for slope in study.summary["rate_slopes"]:
        click.echo(f"📉 {slope['model']} {slope['method']}: log-log slope {slope['log_log_slope']:.3f}")


# ========== ANALYZE ==========

@cli.command("analyze")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--response", "response_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--k-max", type=int, default=Config.K_MAX, show_default=True)
@click.option("--cv-reps", type=int, default=Config.CV_REPS, show_default=True)
@click.option("--l-star", type=int, default=Config.L_STAR, show_default=True)
@click.option("--B", "B", type=int, default=Config.B, show_default=True)
@click.option("--M", "M", type=int, default=Config.M, show_default=True)
@click.option("--c1-multiplier", type=float, default=Config.C1_MULTIPLIER, show_default=True)
@click.option("--c2", type=float, default=Config.C2, show_default=True)
@click.option("--delta-star", type=float, default=Config.ANALYZE_DELTA_STAR, show_default=True)
@click.option("--seed", type=int, default=Config.SEED, show_default=True)
@click.option("--threads", type=int, default=Config.THREADS, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@handle_errors
def cmd_analyze(input_path, response_path, k_max, cv_reps, l_star, B, M, c1_multiplier, c2,
                delta_star, seed, threads, out):
    """Essential-rank calibration vs spectral truncation on a covariate / response pair"""
    W = csv_io.read_curves(input_path)
    y = csv_io.read_response(response_path, W.grid)
    n_response = y.n if isinstance(y, CurveSet) else len(y)
    if n_response != W.n:
        raise InvalidArgumentError(f"{response_path} has {n_response} responses, {input_path} has {W.n} curves")
    click.echo(f"🔧 delta* = {delta_star}")

    run = _run_config(n=W.n, L=W.L, k_max=k_max, cv_reps=cv_reps, l_star=l_star, B=B, M=M,
                      c1_multiplier=c1_multiplier, c2=c2, delta_star=delta_star, seed=seed, threads=threads)
    analysis = services.study_service.analyze(W, y, run)

    out = Path(out)
    csv_io.write_curves(out / "decontaminated.csv", analysis.pop("decontaminated"))
    csv_io.write_matrix(out / "error_variance.csv", np.vstack([W.grid.nodes, analysis.pop("error_variance")]))
    rc_fit, st_fit = analysis.pop("rc_fit"), analysis.pop("st_fit")
    _slope_files(out / "rc", rc_fit)
    _slope_files(out / "st", st_fit)
    analysis["rc_fit"] = rc_fit.to_dict()
    analysis["st_fit"] = st_fit.to_dict()
    analysis["response"] = (ResponseKind.FUNCTIONAL if isinstance(y, CurveSet) else ResponseKind.SCALAR).value
    csv_io.write_json(out / "analysis.json", analysis)
    click.echo(
        f"📈 essential rank {analysis['essential_rank']}, spectral cut-off {analysis['spectral_cutoff']}; "
        f"R^2 RC {analysis['r_squared']['rc']:.4f}, ST {analysis['r_squared']['st']:.4f} -> {out}"
    )


if __name__ == "__main__":
    cli()
