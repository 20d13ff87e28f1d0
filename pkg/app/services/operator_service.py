"""
Operator service
Piecewise-constant kernels, eigensystems, Moore-Penrose inverses and the fourth-moment operator var(X x X)

Matrix/operator correspondence: a covariance matrix K on an L-point grid is the kernel of the
integral operator with eigenvalues eig(K)/L and eigenfunctions sqrt(L) v_j. Kernels of
Hilbert-Schmidt operators are stored as L x L arrays and paired by <A, B>_HS = sum(A * B)/L^2.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg

from ..utils.errors import InvalidArgumentError, RankDeficientError
from ..utils.grid import Grid, GridFunction
from .covariance_service import CovMatrix

logger = logging.getLogger(__name__)

CLIP_RATIO = 1e-12


class OperatorMode(str, Enum):
    COVARIANCE = "covariance"
    PSEUDO_INVERSE = "pseudo-inverse"


@dataclass(frozen=True, eq=False)
class KernelEstimate:
    """k(s, t) = K(i, j) for (s, t) in I_i x I_j"""
    matrix: CovMatrix
    grid: Grid

    def evaluate(self, s, t) -> np.ndarray:
        L = self.grid.L
        i = np.clip(np.floor(np.asarray(s, dtype=float) * L).astype(int), 0, L - 1)
        j = np.clip(np.floor(np.asarray(t, dtype=float) * L).astype(int), 0, L - 1)
        return self.matrix.entries[i, j]


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Leading eigenvalues (sorted, positive) and grid-sampled orthonormal eigenfunctions"""
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    grid: Grid

    def __post_init__(self):
        values = np.array(self.eigenvalues, dtype=float).ravel()
        functions = np.array(self.eigenfunctions, dtype=float).reshape(values.size, -1) if values.size \
            else np.zeros((0, self.grid.L))
        if functions.shape != (values.size, self.grid.L):
            raise InvalidArgumentError(
                f"{values.size} eigenvalues need {values.size} x {self.grid.L} eigenfunctions, got {functions.shape}"
            )
        if np.any(np.diff(values) > 0):
            raise InvalidArgumentError("eigenvalues must be sorted in decreasing order")
        values.setflags(write=False)
        functions.setflags(write=False)
        object.__setattr__(self, 'eigenvalues', values)
        object.__setattr__(self, 'eigenfunctions', functions)

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.size)

    def scores(self, curves: np.ndarray) -> np.ndarray:
        """<f, eta_j> for each row f (n x r)"""
        return np.atleast_2d(curves) @ self.eigenfunctions.T / self.grid.L

    def project(self, curves: np.ndarray) -> np.ndarray:
        """Projection of each row onto span{eta_j}"""
        return self.scores(curves) @ self.eigenfunctions

    def to_dict(self) -> dict:
        return {
            'eigenvalues': self.eigenvalues.tolist(),
            'eigenfunctions': self.eigenfunctions.tolist(),
            'grid': self.grid.nodes.tolist(),
            'rank': self.rank,
        }


@dataclass(frozen=True, eq=False)
class RankedOperator:
    """sum_j lambda_j^{+1 or -1} <f, eta_j> eta_j"""
    eigensystem: EigenSystem
    mode: OperatorMode

    def apply(self, f: GridFunction) -> GridFunction:
        return apply_operator(self, f)

    def kernel(self) -> np.ndarray:
        """Kernel matrix k with (A f)(s) = (1/L) sum_t k(s, t) f(t)"""
        es = self.eigensystem
        return es.eigenfunctions.T @ np.diag(self._weights()) @ es.eigenfunctions

    def _weights(self) -> np.ndarray:
        values = self.eigensystem.eigenvalues
        return values if self.mode == OperatorMode.COVARIANCE else 1.0 / values


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    """Columns scaled so the first nonzero coordinate is positive"""
    fixed = vectors.copy()
    for k in range(fixed.shape[1]):
        column = fixed[:, k]
        threshold = 1e-12 * max(np.max(np.abs(column)), 1e-300)
        nonzero = np.flatnonzero(np.abs(column) > threshold)
        if nonzero.size and column[nonzero[0]] < 0:
            fixed[:, k] = -column
    return fixed


def kernel_eigen(Kx: CovMatrix, grid: Grid, r: int) -> EigenSystem:
    """
    Top-r eigenpairs of the integral operator with piecewise-constant kernel Kx

    Raises:
        RankDeficientError: fewer than r eigenvalues above the clipping level
    """
    L = grid.L
    if Kx.L != L:
        raise InvalidArgumentError(f"covariance of size {Kx.L} does not match grid of {L} nodes")
    if not 1 <= r <= L:
        raise InvalidArgumentError(f"rank must satisfy 1 <= r <= {L}, got {r}")
    values, vectors = linalg.eigh(Kx.entries / L)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    top = values[0] if values.size else 0.0
    positive = int(np.sum(values > max(CLIP_RATIO * top, 0.0))) if top > 0 else 0
    if positive < r:
        raise RankDeficientError(f"requested rank {r} but only {positive} positive eigenvalues")
    vectors = _sign_fix(vectors[:, :r])
    return EigenSystem(eigenvalues=values[:r], eigenfunctions=np.sqrt(L) * vectors.T, grid=grid)


def _check_invertible(es: EigenSystem):
    values = es.eigenvalues
    if es.rank == 0:
        raise InvalidArgumentError("eigensystem is empty")
    if np.any(values <= CLIP_RATIO * values[0]) or np.any(values <= 0):
        raise InvalidArgumentError("eigensystem has a zero eigenvalue; pseudo-inverse undefined")


def covariance_operator(es: EigenSystem) -> RankedOperator:
    return RankedOperator(eigensystem=es, mode=OperatorMode.COVARIANCE)


def pseudo_inverse(es: EigenSystem) -> RankedOperator:
    _check_invertible(es)
    return RankedOperator(eigensystem=es, mode=OperatorMode.PSEUDO_INVERSE)


def apply_operator(op: RankedOperator, f: GridFunction) -> GridFunction:
    es = op.eigensystem
    f = np.asarray(f, dtype=float)
    if f.shape != (es.grid.L,):
        raise InvalidArgumentError(f"function of length {f.size} does not match grid of {es.grid.L} nodes")
    coefficients = es.eigenfunctions @ f / es.grid.L
    return (op._weights() * coefficients) @ es.eigenfunctions


@dataclass(frozen=True, eq=False)
class FourthMomentOperator:
    """
    var(X x X) for Gaussian X, or its inverse, in the basis zeta_jk = eta_j x eta_k

    Forward: 2 lambda_j^2 on zeta_jj, 2 lambda_j lambda_k on zeta_jk + zeta_kj, zero on the
    antisymmetric span. The Moore-Penrose inverse inverts those eigenvalues; published_coefficients
    reproduces the published display, which is 4x the Moore-Penrose action.
    """
    eigensystem: EigenSystem
    inverse: bool = False
    published_coefficients: bool = False

    def coefficients(self, kernel: np.ndarray) -> np.ndarray:
        """C_jk = <zeta_jk, B>_HS"""
        es = self.eigensystem
        kernel = np.asarray(kernel, dtype=float)
        if kernel.shape != (es.grid.L, es.grid.L):
            raise InvalidArgumentError(f"kernel of shape {kernel.shape} does not match grid of {es.grid.L} nodes")
        return es.eigenfunctions @ kernel @ es.eigenfunctions.T / es.grid.L ** 2

    def apply(self, kernel: np.ndarray) -> np.ndarray:
        es = self.eigensystem
        C = self.coefficients(kernel)
        symmetric = C + C.T
        values = es.eigenvalues
        if not self.inverse:
            D = values[:, None] * symmetric * values[None, :]
        else:
            D = symmetric / np.outer(values, values)
            if not self.published_coefficients:
                D = D / 4.0
        return es.eigenfunctions.T @ D @ es.eigenfunctions


def var_xx(es: EigenSystem) -> FourthMomentOperator:
    return FourthMomentOperator(eigensystem=es)


def var_xx_pinv(es: EigenSystem, published_coefficients: bool = False) -> FourthMomentOperator:
    _check_invertible(es)
    return FourthMomentOperator(eigensystem=es, inverse=True, published_coefficients=published_coefficients)


def zeta(es: EigenSystem, j: int, k: int) -> np.ndarray:
    """Kernel of eta_j x eta_k (0-based indices)"""
    return np.outer(es.eigenfunctions[j], es.eigenfunctions[k])


def hs_inner(A: np.ndarray, B: np.ndarray, grid: Grid) -> float:
    return float(np.sum(A * B) / grid.L ** 2)


def hs_norm(A: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(max(hs_inner(A, A, grid), 0.0)))
