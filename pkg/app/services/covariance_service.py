"""
Covariance service
Empirical covariances, band masks and the masked low-rank completion used to estimate K_X
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Optional

import numpy as np
from scipy import linalg
from scipy.optimize import minimize

from ..config.config import Config
from ..utils.errors import InsufficientDataError, InvalidArgumentError
from ..utils.grid import CurveSet

logger = logging.getLogger(__name__)

_SYMMETRY_TOL = 1e-10
_TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Symmetric L x L covariance matrix on a grid"""
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidArgumentError(f"covariance matrix must be square, got shape {entries.shape}")
        scale = max(1.0, float(np.max(np.abs(entries)))) if entries.size else 1.0
        if np.max(np.abs(entries - entries.T), initial=0.0) > _SYMMETRY_TOL * scale:
            raise InvalidArgumentError("covariance matrix must be symmetric")
        entries = (entries + entries.T) / 2
        if np.min(np.diag(entries), initial=0.0) < -_SYMMETRY_TOL * scale:
            raise InvalidArgumentError("covariance matrix must have a nonnegative diagonal")
        entries.setflags(write=False)
        object.__setattr__(self, 'entries', entries)

    @property
    def L(self) -> int:
        return int(self.entries.shape[0])


@dataclass(frozen=True)
class BandMask:
    """0/1 mask selecting entries with |i - j| > ceil(L * delta*)"""
    L: int
    band_fraction: float

    @property
    def half_width(self) -> int:
        # guard keeps 100 * 0.15 at 15 rather than 15.000000000000002 -> 16
        return int(math.ceil(self.L * self.band_fraction - 1e-9))

    @property
    def entries(self) -> np.ndarray:
        index = np.arange(self.L)
        return (np.abs(index[:, None] - index[None, :]) > self.half_width).astype(float)

    def entry(self, i: int, j: int) -> int:
        """1-based entry lookup"""
        return int(abs(i - j) > self.half_width)


@dataclass(frozen=True, eq=False)
class LowRankFactor:
    """Factor theta (L x j) of the PSD rank-<=j matrix Theta = theta theta'"""
    theta: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.theta.shape[1])

    def gram(self) -> np.ndarray:
        G = self.theta @ self.theta.T
        return (G + G.T) / 2

    def to_cov(self) -> CovMatrix:
        return CovMatrix(self.gram())


class CompletionFit(NamedTuple):
    """Outcome of one rank-j masked completion"""
    factor: LowRankFactor
    objective: float
    converged: bool
    iterations: int
    gradient_norm: float


@dataclass
class RankScan:
    """Scree scan j -> f(j) for j = 1..M on one covariance matrix"""
    fits: Dict[int, CompletionFit]
    c1: float
    chosen: Optional[int]

    @property
    def objectives(self) -> Dict[int, float]:
        return {j: fit.objective for j, fit in self.fits.items()}

    @property
    def converged(self) -> Dict[int, bool]:
        return {j: fit.converged for j, fit in self.fits.items()}

    @property
    def unconverged(self) -> List[int]:
        return [j for j, fit in self.fits.items() if not fit.converged]

    def to_dict(self) -> dict:
        return {
            'objectives': {str(j): f for j, f in self.objectives.items()},
            'converged': {str(j): c for j, c in self.converged.items()},
            'c1': self.c1,
            'chosen_rank': self.chosen,
        }


def empirical_covariance(W: CurveSet) -> CovMatrix:
    """(1/n) sum_i (W_i - W_bar)(W_i - W_bar)'; divisor n"""
    if W.n < 2:
        raise InsufficientDataError(f"empirical covariance needs at least 2 curves, got {W.n}")
    centered = W.centered()
    K = centered.T @ centered / W.n
    return CovMatrix((K + K.T) / 2)


def band_mask(L: int, delta_star: float) -> BandMask:
    if L < 1:
        raise InvalidArgumentError(f"mask size must be positive, got {L}")
    if not 0.0 <= delta_star <= 0.25:
        raise InvalidArgumentError(f"band fraction delta* must lie in [0, 1/4], got {delta_star}")
    return BandMask(L=L, band_fraction=float(delta_star))


def _check_dims(theta: np.ndarray, Khat: CovMatrix, mask: BandMask):
    if mask.L != Khat.L or theta.ndim != 2 or theta.shape[0] != Khat.L:
        raise InvalidArgumentError(
            f"dimension mismatch: theta {theta.shape}, covariance {Khat.L}x{Khat.L}, mask {mask.L}x{mask.L}"
        )


def masked_objective(theta: LowRankFactor, Khat: CovMatrix, mask: BandMask) -> float:
    """||P o (K_hat - theta theta')||_F^2, unnormalized"""
    _check_dims(theta.theta, Khat, mask)
    residual = mask.entries * (Khat.entries - theta.theta @ theta.theta.T)
    return float(np.sum(residual ** 2))


def masked_gradient(theta: LowRankFactor, Khat: CovMatrix, mask: BandMask) -> np.ndarray:
    """Gradient -4 (P o (K_hat - theta theta')) theta of the factorized objective"""
    _check_dims(theta.theta, Khat, mask)
    residual = mask.entries * (Khat.entries - theta.theta @ theta.theta.T)
    return -4.0 * residual @ theta.theta


def spectral_factor(Khat: CovMatrix, j: int) -> np.ndarray:
    """Best rank-j PSD approximation of K_hat in factor form"""
    values, vectors = linalg.eigh(Khat.entries)
    order = np.argsort(values)[::-1][:j]
    return vectors[:, order] * np.sqrt(np.clip(values[order], 0.0, None))


def _gradient_scale(K: np.ndarray) -> float:
    """Size of -4 (P o K) theta for a factor of magnitude sqrt(max|K|)"""
    return 4.0 * K.shape[0] * float(np.abs(K).max()) ** 1.5


def _objective_and_gradient(x: np.ndarray, K: np.ndarray, P: np.ndarray, shape):
    theta = x.reshape(shape)
    residual = P * (K - theta @ theta.T)
    value = float(np.sum(residual ** 2))
    gradient = -4.0 * residual @ theta
    return value, gradient.ravel()


def minimize_rank_j(Khat: CovMatrix, mask: BandMask, j: int,
                    tol: float = None, max_iter: int = None,
                    restarts: int = None, seed: int = 0,
                    init: Optional[np.ndarray] = None) -> CompletionFit:
    """
    Minimize ||P o (K_hat - theta theta')||_F^2 over L x j factors theta

    Starts from the rank-j spectral approximation of K_hat, two perturbed copies of it and,
    when given, the caller's warm start; the lowest objective wins, near-ties going to
    the smallest factor.

    Args:
        Khat: empirical covariance
        mask: band mask of matching size
        j: target rank, 1 <= j <= L
        tol: gradient infinity-norm tolerance, relative to the gradient scale 4 L max|K_hat|^(3/2)
        max_iter: iteration cap per start
        restarts: number of starts built from the spectral initialization
        seed: seed for the perturbed starts
        init: optional extra L x j starting factor

    Returns:
        CompletionFit with converged=False when the chosen start stopped short of the
        tolerance without the optimizer reporting convergence
    """
    tol = Config.OPT_TOL if tol is None else tol
    max_iter = Config.OPT_MAX_ITER if max_iter is None else max_iter
    restarts = Config.OPT_RESTARTS if restarts is None else restarts
    L = Khat.L
    if not 1 <= j <= L:
        raise InvalidArgumentError(f"rank must satisfy 1 <= j <= {L}, got {j}")
    if mask.L != L:
        raise InvalidArgumentError(f"mask of size {mask.L} does not match covariance of size {L}")

    K = Khat.entries
    if not np.any(K):
        return CompletionFit(LowRankFactor(np.zeros((L, j))), 0.0, True, 0, 0.0)

    P = mask.entries
    shape = (L, j)
    spectral = spectral_factor(Khat, j)
    rng = np.random.default_rng(seed)
    scale = max(float(np.sqrt(np.abs(K).max())), 1e-12)
    gtol = tol * _gradient_scale(K)
    starts = [spectral]
    for _ in range(max(restarts, 1) - 1):
        starts.append(spectral + 0.1 * scale * rng.standard_normal(shape))
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape != shape:
            raise InvalidArgumentError(f"warm start of shape {init.shape} does not match {shape}")
        starts.append(init)

    fits = []
    for start in starts:
        result = minimize(
            _objective_and_gradient, start.ravel(), args=(K, P, shape),
            method="L-BFGS-B", jac=True,
            options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15, "maxcor": 20},
        )
        theta = result.x.reshape(shape)
        value, gradient = _objective_and_gradient(result.x, K, P, shape)
        gradient_norm = float(np.max(np.abs(gradient))) if gradient.size else 0.0
        fit = CompletionFit(
            factor=LowRankFactor(theta),
            objective=value,
            converged=gradient_norm <= gtol or bool(result.success),
            iterations=int(result.nit),
            gradient_norm=gradient_norm,
        )
        fits.append(fit)

    # Near-ties (ranks above the identifiable one) go to the smallest factor norm
    lowest = min(fit.objective for fit in fits)
    tie = lowest + _TIE_TOL * max(1.0, float(np.sum(K ** 2)))
    best = min((fit for fit in fits if fit.objective <= tie),
               key=lambda fit: float(np.sum(fit.factor.theta ** 2)))

    if not best.converged:
        logger.debug(f"[COMPLETION] rank {j} stopped with gradient norm {best.gradient_norm:.3e} (tol {gtol:.1e})")
    return best


def scree_select(f: Mapping[int, float], c1: float) -> Optional[int]:
    """min{j : f(j) <= c1}, or None when no rank qualifies"""
    if not f:
        raise InvalidArgumentError("scree values are empty")
    for j in sorted(f):
        if f[j] <= c1:
            return j
    return None


def rank_scan(Khat: CovMatrix, mask: BandMask, max_rank: int, c1: float,
              tol: float = None, max_iter: int = None, seed: int = 0,
              stop_at_cutoff: bool = False) -> RankScan:
    """
    Fit ranks j = 1..max_rank, warm-starting rank j+1 from the rank-j factor

    The padded warm start nests the smaller fit, so f(j) is non-increasing in j.
    With stop_at_cutoff the scan ends at the first j passing c1.
    """
    fits: Dict[int, CompletionFit] = {}
    previous: Optional[np.ndarray] = None
    for j in range(1, max_rank + 1):
        init = None
        if previous is not None:
            init = np.hstack([previous, np.zeros((Khat.L, 1))])
        fit = minimize_rank_j(Khat, mask, j, tol=tol, max_iter=max_iter, seed=seed + j, init=init)
        fits[j] = fit
        previous = fit.factor.theta
        if stop_at_cutoff and fit.objective <= c1:
            break

    scan = RankScan(fits=fits, c1=c1, chosen=scree_select({j: fit.objective for j, fit in fits.items()}, c1))
    if scan.unconverged:
        logger.debug(f"[COMPLETION] optimizer did not reach tolerance for ranks {scan.unconverged}")
    return scan
