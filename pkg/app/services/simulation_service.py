"""
Simulation service
Karhunen-Loeve generators for the canonical covariate models M1-M6, banded tent-function and
i.i.d. measurement errors, and linear / functional / quadratic responses
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from numpy.polynomial import legendre

from ..models.schemas import BasisFamily, ErrorKind, ErrorSpec, ModelSpec
from ..utils.errors import InvalidArgumentError
from ..utils.grid import CurveSet, Grid, GridFunction, gram_schmidt
from .regression_service import SlopeFunction, SlopeOperator

logger = logging.getLogger(__name__)

FULL_RANK = 20

# Monomial tails of the extended families leave residuals near 1e-11 after projection
_EXTENDED_GS_TOL = 1e-14

_CANONICAL_SLOPES = {
    'M1': [1.0, 1.0, -1.0],
    'M2': [-0.4, 2.0, -1.0, 1.0, -0.7],
    'M3': [0.7, 3.0, 0.0, -1.0, 0.5],
    'M4': [1.0, 1.0, -1.0, -1.0, 0.5],
    'M5': [-0.4, 2.0, -1.0, 1.0, -0.7, 0.5, -0.3],
    'M6': [0.7, 3.0, 0.0, -1.0, 0.5, 0.0, 0.3],
}

_CANONICAL_FAMILIES = {
    'M1': BasisFamily.FOURIER,
    'M2': BasisFamily.GRAM_SCHMIDT_M2,
    'M3': BasisFamily.LEGENDRE_M3,
    'M4': BasisFamily.FOURIER_EXTENDED_M4,
    'M5': BasisFamily.GRAM_SCHMIDT_EXTENDED_M5,
    'M6': BasisFamily.LEGENDRE_EXTENDED_M6,
}

CANONICAL_MODELS = tuple(_CANONICAL_FAMILIES)


@dataclass(frozen=True, eq=False)
class SimulatedData:
    """One simulated sample: W = X + U and the response, with the generating truth"""
    X: CurveSet
    U: CurveSet
    W: CurveSet
    y: Union[np.ndarray, CurveSet]
    truth: ModelSpec
    error: ErrorSpec
    basis: np.ndarray
    beta: Optional[GridFunction]
    slope_kernel: Optional[np.ndarray]
    seed: int

    @property
    def grid(self) -> Grid:
        return self.W.grid

    @property
    def n(self) -> int:
        return self.W.n

    def truth_dict(self) -> dict:
        """Sidecar describing the generating model and the true slope"""
        return {
            'model': self.truth.model_dump(mode='json'),
            'error': self.error.model_dump(mode='json'),
            'seed': self.seed,
            'grid': self.grid.nodes.tolist(),
            'beta': None if self.beta is None else np.asarray(self.beta).tolist(),
            'slope_kernel': None if self.slope_kernel is None else self.slope_kernel.tolist(),
        }


# ========== EIGENVALUES ==========

def eigenvalue_schedule(r: int, hi: float = 1.5, lo: float = 0.3) -> np.ndarray:
    """r equispaced values from hi down to lo; r = 1 gives {hi}"""
    if r < 1:
        raise InvalidArgumentError(f"number of eigenvalues must be positive, got {r}")
    if not hi > lo > 0:
        raise InvalidArgumentError(f"eigenvalue bounds need hi > lo > 0, got hi={hi}, lo={lo}")
    if r == 1:
        return np.array([hi])
    return np.linspace(hi, lo, r)


def tail_eigenvalues_m456(model: str) -> np.ndarray:
    """
    Twenty eigenvalues: an equispaced head (3 for M4, 5 for M5 and M6) and a quartic power-law tail

    The tail constants put roughly 94.6% of the total variance in the head.
    """
    if model == 'M4':
        head, constant = 3, 0.1421
    elif model in ('M5', 'M6'):
        head, constant = 5, 0.2368
    else:
        raise InvalidArgumentError(f"tail eigenvalues are defined for M4, M5 and M6, not {model}")
    j = np.arange(head + 1, FULL_RANK + 1)
    tail = constant * (j - head) ** -4.0
    return np.concatenate([eigenvalue_schedule(head), tail])


# ========== BASES ==========

def _fourier(k: int) -> Callable[[np.ndarray], np.ndarray]:
    """k-th function (0-based) of 1, sqrt2 sin(2 pi t), sqrt2 cos(2 pi t), sqrt2 sin(4 pi t), ..."""
    if k == 0:
        return lambda t: np.ones_like(t)
    j = (k + 1) // 2
    if k % 2 == 1:
        return lambda t: np.sqrt(2.0) * np.sin(2 * np.pi * j * t)
    return lambda t: np.sqrt(2.0) * np.cos(2 * np.pi * j * t)


def _shifted_legendre(k: int) -> Callable[[np.ndarray], np.ndarray]:
    """Degree-k shifted Legendre polynomial on [0, 1] (value 1 at t = 1)"""
    coefficients = np.zeros(k + 1)
    coefficients[k] = 1.0
    return lambda t: legendre.legval(2 * t - 1, coefficients)


M2_GENERATORS: List[Callable[[np.ndarray], np.ndarray]] = [
    lambda t: 5 * t * np.sin(2 * np.pi * t),
    lambda t: t * np.cos(2 * np.pi * t) - 3,
    lambda t: 5 * t + np.sin(2 * np.pi * t) - 2,
    lambda t: np.cos(4 * np.pi * t) + 0.25 * t ** 2,
    lambda t: 6 * t * (1 - t),
]

M3_GENERATORS: List[Callable[[np.ndarray], np.ndarray]] = [
    lambda t: np.ones_like(t),
    lambda t: 2 * t - 1,
    lambda t: 6 * t ** 2 - 6 * t + 1,
    lambda t: 20 * t ** 3 - 30 * t ** 2 + 12 * t - 1,
    lambda t: 70 * t ** 4 - 140 * t ** 3 + 90 * t ** 2 - 20 * t + 1,
]


def basis_generators(family: BasisFamily, r: int) -> List[Callable[[np.ndarray], np.ndarray]]:
    """Unnormalized generating functions of a family, in processing order"""
    if family in (BasisFamily.FOURIER, BasisFamily.FOURIER_EXTENDED_M4):
        return [_fourier(k) for k in range(r)]
    if family == BasisFamily.GRAM_SCHMIDT_M2:
        if r > len(M2_GENERATORS):
            raise InvalidArgumentError(f"family {family.value} has {len(M2_GENERATORS)} generators, rank {r} requested")
        return M2_GENERATORS[:r]
    if family == BasisFamily.LEGENDRE_M3:
        return [_shifted_legendre(k) for k in range(r)]
    if family == BasisFamily.GRAM_SCHMIDT_EXTENDED_M5:
        tails = [(lambda p: (lambda t: t ** p))(j - 3) for j in range(6, r + 1)]
        return (M2_GENERATORS + tails)[:r]
    if family == BasisFamily.LEGENDRE_EXTENDED_M6:
        tails = [(lambda p: (lambda t: t ** p))(j - 1) for j in range(6, r + 1)]
        return (M3_GENERATORS + tails)[:r]
    raise InvalidArgumentError(f"family {family.value} has no analytic generators")


def make_basis(spec: ModelSpec, grid: Grid) -> List[GridFunction]:
    """
    r orthonormal grid functions of the model's family

    Fourier and Legendre families are normalized analytically; the Gram-Schmidt families and
    custom bases are orthonormalized on the grid itself.
    """
    family, r = spec.basis_family, spec.rank
    t = grid.nodes
    if family == BasisFamily.CUSTOM:
        raw = [np.asarray(f, dtype=float) for f in spec.custom_basis[:r]]
        return gram_schmidt(raw, grid)
    generators = basis_generators(family, r)
    if family in (BasisFamily.FOURIER, BasisFamily.FOURIER_EXTENDED_M4):
        return [f(t) for f in generators]
    if family == BasisFamily.LEGENDRE_M3:
        return [np.sqrt(2 * k + 1) * f(t) for k, f in enumerate(generators)]
    tol = _EXTENDED_GS_TOL if r > 5 else 1e-10
    return gram_schmidt([f(t) for f in generators], grid, tol=tol)


def triangular_error_basis(delta: float, grid: Grid) -> List[GridFunction]:
    """
    floor(1/delta) tent functions, tent l supported on [(l-1) delta, l delta] with its peak at the
    midpoint and height sqrt(3/delta), so that each has unit L2 norm
    """
    if not 0 < delta <= 1:
        raise InvalidArgumentError(f"error bandwidth delta must lie in (0, 1], got {delta}")
    D = int(1.0 / delta + 1e-9)
    height = np.sqrt(3.0 / delta)
    half = delta / 2
    t = grid.nodes
    tents = []
    for l in range(1, D + 1):
        center = (l - 0.5) * delta
        tents.append(height * np.clip(1.0 - np.abs(t - center) / half, 0.0, None))
    return tents


# ========== CANONICAL SPECS ==========

def canonical_model(name: str, response_noise: float = 1.0) -> ModelSpec:
    """ModelSpec of M1..M6 with alpha = 0"""
    name = name.upper()
    if name not in _CANONICAL_FAMILIES:
        raise InvalidArgumentError(f"unknown model {name}; expected one of {', '.join(CANONICAL_MODELS)}")
    if name in ('M4', 'M5', 'M6'):
        eigenvalues = tail_eigenvalues_m456(name)
    else:
        eigenvalues = eigenvalue_schedule(3 if name == 'M1' else 5)
    return ModelSpec(
        name=name,
        basis_family=_CANONICAL_FAMILIES[name],
        rank=len(eigenvalues),
        eigenvalues=eigenvalues.tolist(),
        slope_coefficients=_CANONICAL_SLOPES[name],
        response_noise=response_noise,
    )


def banded_gammas(D: int) -> List[float]:
    """gamma_1 = 0.09, gamma_2..gamma_D equispaced from 0.04 down to 0.01"""
    if D < 1:
        raise InvalidArgumentError(f"number of error components must be positive, got {D}")
    if D == 1:
        return [0.09]
    return [0.09] + np.linspace(0.04, 0.01, D - 1).tolist()


def banded_error(delta: float) -> ErrorSpec:
    spec = ErrorSpec(kind=ErrorKind.BANDED, delta=delta)
    return ErrorSpec(kind=ErrorKind.BANDED, delta=delta, gammas=banded_gammas(spec.D))


def iid_error(variance: float = 0.25) -> ErrorSpec:
    return ErrorSpec(kind=ErrorKind.IID, variance=variance)


def no_error() -> ErrorSpec:
    return ErrorSpec(kind=ErrorKind.NONE)


def error_spec(kind: Union[ErrorKind, str], delta: float = 0.05, variance: float = 0.25) -> ErrorSpec:
    kind = ErrorKind(kind)
    if kind == ErrorKind.BANDED:
        return banded_error(delta)
    if kind == ErrorKind.IID:
        return iid_error(variance)
    return no_error()


# ========== TRUTH ==========

def _basis_matrix(model: ModelSpec, grid: Grid) -> np.ndarray:
    return np.vstack(make_basis(model, grid))


def slope_for_model(model: ModelSpec, grid: Grid, basis: Optional[np.ndarray] = None) -> SlopeFunction:
    """beta = sum_j c_j eta_j on the grid"""
    E = _basis_matrix(model, grid) if basis is None else basis
    coefficients = np.zeros(model.rank)
    coefficients[:len(model.slope_coefficients)] = model.slope_coefficients
    return SlopeFunction(beta=coefficients @ E, intercept=model.intercept, grid=grid)


def _coefficient_matrix(rows: List[List[float]], r: int) -> np.ndarray:
    C = np.zeros((r, r))
    size = len(rows)
    C[:size, :size] = np.asarray(rows, dtype=float)
    return C


def slope_kernel_for_model(model: ModelSpec, grid: Grid, basis: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
    """Kernel sum c_jk eta_j(s) eta_k(t) of the functional or quadratic slope, if the model has one"""
    rows = model.operator_coefficients if model.functional_response else model.quadratic_coefficients
    if rows is None:
        return None
    E = _basis_matrix(model, grid) if basis is None else basis
    return E.T @ _coefficient_matrix(rows, model.rank) @ E


def true_covariance(model: ModelSpec, grid: Grid, basis: Optional[np.ndarray] = None) -> np.ndarray:
    """K_X(t_i, t_j) = sum_j lambda_j eta_j(s) eta_j(t)"""
    E = _basis_matrix(model, grid) if basis is None else basis
    return E.T @ np.diag(model.eigenvalues) @ E


def error_covariance(err: ErrorSpec, grid: Grid) -> np.ndarray:
    """K_U on the grid"""
    L = grid.L
    if err.kind == ErrorKind.NONE:
        return np.zeros((L, L))
    if err.kind == ErrorKind.IID:
        return err.variance * np.eye(L)
    Phi = np.vstack(triangular_error_basis(err.delta, grid))
    gammas = err.gammas if err.gammas is not None else banded_gammas(err.D)
    return Phi.T @ np.diag(gammas) @ Phi


# ========== SIMULATION ==========

def _error_curves(err: ErrorSpec, n: int, grid: Grid, rng: np.random.Generator) -> np.ndarray:
    L = grid.L
    if err.kind == ErrorKind.NONE:
        return np.zeros((n, L))
    if err.kind == ErrorKind.IID:
        return rng.normal(0.0, np.sqrt(err.variance), size=(n, L))
    Phi = np.vstack(triangular_error_basis(err.delta, grid))
    gammas = np.asarray(err.gammas if err.gammas is not None else banded_gammas(err.D))
    Q = rng.standard_normal((n, gammas.size))
    return (Q * np.sqrt(gammas)) @ Phi


def simulate(model: ModelSpec, err: ErrorSpec, n: int, grid: Grid, seed: int) -> SimulatedData:
    """
    Draw n curves X_i = sum_j lambda_j^1/2 P_ij eta_j, errors U_i and responses

    Scores P, error draws and response noise come from independent streams spawned from
    one SeedSequence, so a fixed seed reproduces the sample exactly.

    Args:
        model: covariate model and slope
        err: measurement error process
        n: number of curves
        grid: observation grid
        seed: seed of the sample

    Returns:
        SimulatedData with a scalar response vector, or a CurveSet when the model carries
        operator coefficients
    """
    if n < 1:
        raise InvalidArgumentError(f"number of curves must be positive, got {n}")
    score_stream, error_stream, noise_stream = [
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    ]
    E = _basis_matrix(model, grid)
    L = grid.L

    P = score_stream.standard_normal((n, model.rank))
    X = (P * np.sqrt(model.eigenvalues)) @ E
    U = _error_curves(err, n, grid, error_stream)
    W = X + U

    slope_kernel = slope_kernel_for_model(model, grid, E)
    beta = None
    if model.functional_response:
        signal = X @ slope_kernel.T / L
        noise = noise_stream.normal(0.0, model.response_noise, size=(n, L))
        y = CurveSet(model.intercept + signal + noise, grid)
    else:
        beta = slope_for_model(model, grid, E).beta
        signal = X @ beta / L
        if slope_kernel is not None:
            signal = signal + np.einsum('is,st,it->i', X, slope_kernel, X) / L ** 2
        y = model.intercept + signal + noise_stream.normal(0.0, model.response_noise, size=n)

    logger.debug(f"[SIM] {model.name or model.basis_family.value}: n={n}, L={L}, error={err.kind.value}, seed={seed}")
    return SimulatedData(
        X=CurveSet(X, grid),
        U=CurveSet(U, grid),
        W=CurveSet(W, grid),
        y=y,
        truth=model,
        error=err,
        basis=E,
        beta=beta,
        slope_kernel=slope_kernel,
        seed=seed,
    )


def canonical_summary() -> Dict[str, dict]:
    """Rank, head eigenvalues and slope coefficients of every canonical model"""
    summary = {}
    for name in CANONICAL_MODELS:
        spec = canonical_model(name)
        summary[name] = {
            'family': spec.basis_family.value,
            'rank': spec.rank,
            'eigenvalues': spec.eigenvalues[:5],
            'slope': spec.slope_coefficients,
        }
    return summary
