"""
Regression service
Regression calibration slope estimators (scalar, function-on-function, quadratic), the spectral
truncation baseline, cross-validated component selection, prediction and R^2
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np
from sklearn.model_selection import KFold

from ..config.config import Config
from ..utils.errors import InsufficientDataError, InvalidArgumentError, RankDeficientError, UndefinedMetricError
from ..utils.grid import CurveSet, Grid, GridFunction, inner_product
from .covariance_service import empirical_covariance
from .operator_service import EigenSystem, kernel_eigen, pseudo_inverse, var_xx_pinv

logger = logging.getLogger(__name__)

Response = Union[np.ndarray, CurveSet]


@dataclass(frozen=True, eq=False)
class SlopeFunction:
    """Scalar-on-function fit: y = intercept + <W, beta>"""
    beta: np.ndarray
    intercept: float
    grid: Grid

    def to_dict(self) -> dict:
        return {
            'type': 'scalar',
            'intercept': float(self.intercept),
            'beta': np.asarray(self.beta).tolist(),
            'grid': self.grid.nodes.tolist(),
        }


@dataclass(frozen=True, eq=False)
class SlopeOperator:
    """
    Operator with kernel b on (response grid) x (covariate grid):
    (B f)(s) = (1/L) sum_t b(s, t) f(t); intercept is a curve on the response grid
    """
    kernel: np.ndarray
    grid: Grid
    response_grid: Optional[Grid] = None
    intercept: Optional[np.ndarray] = None

    def apply(self, curves: np.ndarray) -> np.ndarray:
        """B applied to each row"""
        return np.atleast_2d(curves) @ self.kernel.T / self.grid.L

    def to_dict(self) -> dict:
        return {
            'type': 'functional',
            'kernel': np.asarray(self.kernel).tolist(),
            'intercept': None if self.intercept is None else np.asarray(self.intercept).tolist(),
            'grid': self.grid.nodes.tolist(),
            'response_grid': None if self.response_grid is None else self.response_grid.nodes.tolist(),
        }


@dataclass(frozen=True, eq=False)
class QuadraticFit:
    """y = intercept + <W, beta> + <W x W, B>_HS"""
    linear: SlopeFunction
    quadratic: SlopeOperator
    intercept: float

    def to_dict(self) -> dict:
        return {
            'type': 'quadratic',
            'intercept': float(self.intercept),
            'beta': np.asarray(self.linear.beta).tolist(),
            'kernel': np.asarray(self.quadratic.kernel).tolist(),
            'grid': self.linear.grid.nodes.tolist(),
        }


Fit = Union[SlopeFunction, SlopeOperator, QuadraticFit]


def as_scalar_response(y: Sequence[float], n: Optional[int] = None) -> np.ndarray:
    """Validated length-n vector of finite responses"""
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("responses must be finite")
    if n is not None and y.size != n:
        raise InvalidArgumentError(f"{y.size} responses for {n} curves")
    return y


def cross_cov_scalar(y: Sequence[float], W: CurveSet) -> GridFunction:
    """C_yW = (1/n) sum_i y_i W_i - y_bar W_bar"""
    y = as_scalar_response(y, W.n)
    if W.n < 2:
        raise InsufficientDataError(f"cross-covariance needs at least 2 curves, got {W.n}")
    return y @ W.data / W.n - y.mean() * W.mean()


def rc_scalar(es: EigenSystem, Cyw: GridFunction, y_bar: float, w_bar: GridFunction) -> SlopeFunction:
    """beta = sum_j lambda_j^-1 <C_yW, eta_j> eta_j; intercept y_bar - <W_bar, beta>"""
    if es.rank == 0:
        raise InvalidArgumentError("eigensystem is empty")
    beta = pseudo_inverse(es).apply(np.asarray(Cyw, dtype=float))
    intercept = float(y_bar) - inner_product(w_bar, beta, es.grid)
    return SlopeFunction(beta=beta, intercept=intercept, grid=es.grid)


def cross_cov_functional(y_curves: CurveSet, W: CurveSet) -> np.ndarray:
    """Kernel of C_yW = (1/n) sum_i (y_i - y_bar) x (W_i - W_bar), shape L_y x L_W"""
    if y_curves.n != W.n:
        raise InvalidArgumentError(f"{y_curves.n} response curves for {W.n} covariate curves")
    W.require(2)
    return y_curves.centered().T @ W.centered() / W.n


def rc_functional(es: EigenSystem, y_curves: CurveSet, W: CurveSet) -> SlopeOperator:
    """B = C_yW K_X^-, so that B P_X = B; intercept y_bar - B W_bar"""
    if not es.grid.matches(W.grid):
        raise InvalidArgumentError("eigensystem and covariates live on different grids")
    C = cross_cov_functional(y_curves, W)
    E = es.eigenfunctions
    L = W.L
    # (C/L) composed with K^- = (1/L) E' diag(1/lambda) E
    kernel = C @ E.T @ np.diag(1.0 / es.eigenvalues) @ E / L
    slope = SlopeOperator(kernel=kernel, grid=W.grid, response_grid=y_curves.grid)
    intercept = y_curves.mean() - slope.apply(W.mean())[0]
    return SlopeOperator(kernel=kernel, grid=W.grid, response_grid=y_curves.grid, intercept=intercept)


def cross_cov_quadratic(y: Sequence[float], W: CurveSet) -> np.ndarray:
    """(1/n) sum_i y_i W_i W_i' - y_bar (1/n) sum_i W_i W_i'"""
    y = as_scalar_response(y, W.n)
    if W.n < 2:
        raise InsufficientDataError(f"cross-covariance needs at least 2 curves, got {W.n}")
    second_moment = W.data.T @ W.data / W.n
    weighted = (W.data * y[:, None]).T @ W.data / W.n
    C = weighted - y.mean() * second_moment
    return (C + C.T) / 2


def rc_quadratic(es: EigenSystem, Cyw: GridFunction, Cyww: np.ndarray,
                 published_coefficients: bool = False, y_bar: float = 0.0,
                 w_bar: Optional[GridFunction] = None,
                 ww_bar: Optional[np.ndarray] = None) -> QuadraticFit:
    """
    Linear part as rc_scalar; quadratic part (var(X x X))^- C_{y,WxW}

    Args:
        es: eigensystem of the estimated K_X (Gaussian X assumed)
        Cyw: scalar cross-covariance
        Cyww: kernel of the cross-covariance with W x W
        published_coefficients: use the published inverse coefficients (4x Moore-Penrose)
        y_bar, w_bar, ww_bar: response mean, covariate mean and mean of W_i W_i' for the intercept

    Returns:
        QuadraticFit with a symmetric quadratic kernel
    """
    L = es.grid.L
    w_bar = np.zeros(L) if w_bar is None else np.asarray(w_bar, dtype=float)
    linear = rc_scalar(es, Cyw, y_bar, w_bar)
    kernel = var_xx_pinv(es, published_coefficients=published_coefficients).apply(np.asarray(Cyww, dtype=float))
    kernel = (kernel + kernel.T) / 2
    quadratic = SlopeOperator(kernel=kernel, grid=es.grid)
    intercept = linear.intercept
    if ww_bar is not None:
        intercept -= float(np.sum(np.asarray(ww_bar) * kernel) / L ** 2)
    return QuadraticFit(linear=linear, quadratic=quadratic, intercept=intercept)


def spectral_truncation(W: CurveSet, y: Response, k: int) -> Union[SlopeFunction, SlopeOperator]:
    """
    Principal-component regression on the uncorrected covariance of W, truncated at k components

    A CurveSet response gives the function-on-function version.
    """
    if k < 1:
        raise InvalidArgumentError(f"number of components must be positive, got {k}")
    es = kernel_eigen(empirical_covariance(W), W.grid, k)
    if isinstance(y, CurveSet):
        return rc_functional(es, y, W)
    y = as_scalar_response(y, W.n)
    return rc_scalar(es, cross_cov_scalar(y, W), y.mean(), W.mean())


def _truncated_fits(W: CurveSet, y: Response, ks: Sequence[int]) -> Dict[int, Optional[Fit]]:
    """Spectral truncation fits for every k from one eigendecomposition; None past the spectrum"""
    K = empirical_covariance(W)
    fits: Dict[int, Optional[Fit]] = {}
    full = None
    for k in sorted(ks, reverse=True):
        try:
            full = kernel_eigen(K, W.grid, k)
            break
        except RankDeficientError:
            fits[k] = None
    if full is None:
        return {k: None for k in ks}
    for k in ks:
        if k in fits:
            continue
        es = EigenSystem(full.eigenvalues[:k], full.eigenfunctions[:k], W.grid)
        if isinstance(y, CurveSet):
            fits[k] = rc_functional(es, y, W)
        else:
            fits[k] = rc_scalar(es, cross_cov_scalar(y, W), y.mean(), W.mean())
    return fits


@dataclass
class CVResult:
    """Mean held-out prediction error per k and the selected k"""
    errors: Dict[int, float]
    chosen: int
    reps: int
    folds: int
    per_rep: Dict[int, list] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'errors': {str(k): v for k, v in self.errors.items()},
            'chosen': self.chosen,
            'reps': self.reps,
            'folds': self.folds,
        }


def _subset_response(y: Response, rows: np.ndarray) -> Response:
    if isinstance(y, CurveSet):
        return y.rows(rows)
    return y[rows]


def _prediction_error(fit: Fit, W: CurveSet, y: Response) -> float:
    predicted = predict(fit, W)
    if isinstance(y, CurveSet):
        return float(np.mean(np.sum((y.data - predicted) ** 2, axis=1) / y.L))
    return float(np.mean((y - predicted) ** 2))


def cv_select_components(W: CurveSet, y: Response, k_range: Sequence[int] = range(1, 11),
                         folds: int = 2, reps: int = 500, seed: int = 0,
                         threads: Optional[int] = None, return_table: bool = False):
    """
    k minimizing held-out squared prediction error, averaged over reps random fold partitions

    Repetition r partitions with KFold(shuffle=True, random_state=seed + r). Ties go to the
    smaller k. Functional responses use the squared L2 norm of the residual curves.

    Returns:
        selected k, or the full CVResult when return_table is set
    """
    n = W.n
    if n < 4:
        raise InsufficientDataError(f"cross-validation needs at least 4 curves, got {n}")
    if folds < 2 or n // folds < 2:
        raise InvalidArgumentError(f"{folds} folds over {n} curves leave a degenerate fold")
    if reps < 1:
        raise InvalidArgumentError(f"number of repetitions must be positive, got {reps}")
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1:
        raise InvalidArgumentError("component range must contain positive integers")
    if isinstance(y, CurveSet):
        if y.n != n:
            raise InvalidArgumentError(f"{y.n} response curves for {n} covariate curves")
    else:
        y = as_scalar_response(y, n)

    def one_rep(rep: int) -> Dict[int, float]:
        totals = {k: 0.0 for k in ks}
        splitter = KFold(n_splits=folds, shuffle=True, random_state=seed + rep)
        for train, test in splitter.split(np.arange(n)):
            fits = _truncated_fits(W.rows(train), _subset_response(y, train), ks)
            for k in ks:
                if fits[k] is None:
                    totals[k] = np.inf
                    continue
                error = _prediction_error(fits[k], W.rows(test), _subset_response(y, test))
                totals[k] += error * len(test) / n
        return totals

    threads = Config.THREADS if threads is None else threads
    if threads > 1 and reps > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tables = list(pool.map(one_rep, range(reps)))
    else:
        tables = [one_rep(rep) for rep in range(reps)]

    errors = {k: float(np.mean([table[k] for table in tables])) for k in ks}
    best = min(errors.values())
    if not np.isfinite(best):
        raise InsufficientDataError("no component count could be fitted on the training folds")
    chosen = min(k for k in ks if errors[k] == best)
    logger.info(f"🔁 [CV] {reps} x {folds}-fold: k = {chosen} (error {best:.4g})")
    if return_table:
        return CVResult(errors=errors, chosen=chosen, reps=reps, folds=folds,
                        per_rep={k: [table[k] for table in tables] for k in ks})
    return chosen


def _check_grid(fit_grid: Grid, W: CurveSet):
    if not fit_grid.matches(W.grid):
        raise InvalidArgumentError(f"fit grid of {fit_grid.L} nodes does not match curves on {W.L} nodes")


def predict(fit: Fit, W_new: CurveSet) -> np.ndarray:
    """
    Predictions for new covariate curves

    Returns:
        length-n vector for scalar and quadratic fits, n x L_y array for functional fits
    """
    if isinstance(fit, SlopeFunction):
        _check_grid(fit.grid, W_new)
        return fit.intercept + W_new.data @ fit.beta / W_new.L
    if isinstance(fit, QuadraticFit):
        _check_grid(fit.linear.grid, W_new)
        L = W_new.L
        linear = W_new.data @ fit.linear.beta / L
        quadratic = np.einsum('is,st,it->i', W_new.data, fit.quadratic.kernel, W_new.data) / L ** 2
        return fit.intercept + linear + quadratic
    if isinstance(fit, SlopeOperator):
        _check_grid(fit.grid, W_new)
        predicted = fit.apply(W_new.data)
        if fit.intercept is not None:
            predicted = predicted + fit.intercept
        return predicted
    raise InvalidArgumentError(f"unsupported fit type {type(fit).__name__}")


def r_squared(actual, predicted) -> float:
    """
    1 - SS_res / SS_tot; for curves (n x L arrays or CurveSets) the sums are of squared L2 norms

    Raises:
        UndefinedMetricError: zero total variation
    """
    if isinstance(actual, CurveSet):
        actual = actual.data
    if isinstance(predicted, CurveSet):
        predicted = predicted.data
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise InvalidArgumentError(f"actual {actual.shape} and predicted {predicted.shape} differ in shape")
    residual = np.sum((actual - predicted) ** 2)
    total = np.sum((actual - actual.mean(axis=0)) ** 2)
    if total <= 0:
        raise UndefinedMetricError("R^2 is undefined for responses with zero total variation")
    return float(1.0 - residual / total)


def l2_distance(f: GridFunction, g: GridFunction, grid: Grid) -> float:
    diff = np.asarray(f, dtype=float) - np.asarray(g, dtype=float)
    return float(np.sqrt(max(inner_product(diff, diff, grid), 0.0)))


def fit_from_dict(payload: dict) -> Fit:
    """Inverse of the fits' to_dict"""
    kind = payload.get('type')
    try:
        grid = Grid(payload['grid'])
        if kind == 'scalar':
            return SlopeFunction(beta=np.asarray(payload['beta'], dtype=float),
                                 intercept=float(payload['intercept']), grid=grid)
        if kind == 'functional':
            response_grid = payload.get('response_grid')
            intercept = payload.get('intercept')
            return SlopeOperator(
                kernel=np.asarray(payload['kernel'], dtype=float),
                grid=grid,
                response_grid=None if response_grid is None else Grid(response_grid),
                intercept=None if intercept is None else np.asarray(intercept, dtype=float),
            )
        if kind == 'quadratic':
            intercept = float(payload['intercept'])
            return QuadraticFit(
                linear=SlopeFunction(beta=np.asarray(payload['beta'], dtype=float), intercept=intercept, grid=grid),
                quadratic=SlopeOperator(kernel=np.asarray(payload['kernel'], dtype=float), grid=grid),
                intercept=intercept,
            )
    except KeyError as e:
        raise InvalidArgumentError(f"fit of type {kind!r} is missing field {e}") from e
    raise InvalidArgumentError(f"unknown fit type {kind!r}")
