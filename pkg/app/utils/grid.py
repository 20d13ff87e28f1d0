"""
Grid utilities
Adequate grids on [0, 1], cell-width quadrature and Gram-Schmidt for grid-sampled functions
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import DegenerateBasisError, InsufficientDataError, InvalidArgumentError

# A function in L2[0, 1] sampled at the grid nodes (length L vector)
GridFunction = np.ndarray

_CELL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Grid:
    """Ascending observation nodes t_1 < ... < t_L in [0, 1], quadrature weight 1/L each"""
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).ravel()
        if nodes.size == 0:
            raise InvalidArgumentError("grid must have at least one node")
        if not np.all(np.isfinite(nodes)):
            raise InvalidArgumentError("grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidArgumentError("grid nodes must be strictly increasing")
        if nodes[0] < -_CELL_TOL or nodes[-1] > 1 + _CELL_TOL:
            raise InvalidArgumentError("grid nodes must lie in [0, 1]")
        nodes.setflags(write=False)
        object.__setattr__(self, 'nodes', nodes)

    @property
    def L(self) -> int:
        return int(self.nodes.size)

    @property
    def weight(self) -> float:
        return 1.0 / self.L

    def is_adequate(self) -> bool:
        """True when node j lies in its cell [(j-1)/L, j/L]"""
        j = np.arange(self.L)
        lower = j / self.L - _CELL_TOL
        upper = (j + 1) / self.L + _CELL_TOL
        return bool(np.all((self.nodes >= lower) & (self.nodes <= upper)))

    def matches(self, other: 'Grid') -> bool:
        return self.L == other.L and bool(np.allclose(self.nodes, other.nodes, rtol=0.0, atol=1e-12))

    def subgrid(self, indices: Sequence[int]) -> 'Grid':
        return Grid(self.nodes[np.asarray(indices, dtype=int)])

    def to_dict(self) -> dict:
        return {'nodes': self.nodes.tolist(), 'L': self.L}


@dataclass(frozen=True, eq=False)
class CurveSet:
    """n discretely observed curves stored as an n x L array over a common grid"""
    data: np.ndarray
    grid: Grid

    def __post_init__(self):
        try:
            data = np.array(self.data, dtype=float)
        except ValueError as e:
            raise InvalidArgumentError(f"curves must form a rectangular array of numbers: {e}") from e
        if data.ndim == 1:
            data = data.reshape(1, -1)
        if data.ndim != 2 or data.shape[1] != self.grid.L:
            raise InvalidArgumentError(
                f"curve array of shape {data.shape} does not match grid of {self.grid.L} nodes"
            )
        data.setflags(write=False)
        object.__setattr__(self, 'data', data)

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def L(self) -> int:
        return self.grid.L

    def mean(self) -> GridFunction:
        return self.data.mean(axis=0)

    def centered(self) -> np.ndarray:
        return self.data - self.data.mean(axis=0, keepdims=True)

    def require(self, min_curves: int = 2):
        if self.n < min_curves:
            raise InsufficientDataError(f"need at least {min_curves} curves, got {self.n}")

    def restrict(self, indices: Sequence[int]) -> 'CurveSet':
        """Columns at the given grid indices, over the corresponding subgrid"""
        idx = np.asarray(indices, dtype=int)
        return CurveSet(self.data[:, idx], self.grid.subgrid(idx))

    def rows(self, rows: Sequence[int]) -> 'CurveSet':
        return CurveSet(self.data[np.asarray(rows, dtype=int)], self.grid)


def regular_grid(L: int) -> Grid:
    """Cell-midpoint grid (j - 1/2)/L"""
    if L < 1:
        raise InvalidArgumentError(f"grid size must be positive, got {L}")
    return Grid((np.arange(L) + 0.5) / L)


def sample_adequate_grid(L: int, seed: int) -> Grid:
    """
    Draw node j uniformly from the cell [(j-1)/L, j/L)

    Args:
        L: number of nodes
        seed: seed of the generator; the same (L, seed) always yields the same grid

    Returns:
        Grid: an adequate grid
    """
    if L < 1:
        raise InvalidArgumentError(f"grid size must be positive, got {L}")
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(0.0, 1.0, size=L)
    return Grid((np.arange(L) + offsets) / L)


def _check_same_grid(f: GridFunction, g: GridFunction, grid: Grid):
    if f.shape[-1] != grid.L or g.shape[-1] != grid.L:
        raise InvalidArgumentError(
            f"grid functions of length {f.shape[-1]} and {g.shape[-1]} do not match grid of {grid.L} nodes"
        )


def inner_product(f: GridFunction, g: GridFunction, grid: Grid) -> float:
    """Riemann approximation (1/L) sum_j f_j g_j of <f, g> on [0, 1]"""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    _check_same_grid(f, g, grid)
    return float(np.dot(f, g) / grid.L)


def norm(f: GridFunction, grid: Grid) -> float:
    return float(np.sqrt(max(inner_product(f, f, grid), 0.0)))


def gram_matrix(fs: Sequence[GridFunction], grid: Grid) -> np.ndarray:
    F = np.atleast_2d(np.asarray(fs, dtype=float))
    if F.shape[1] != grid.L:
        raise InvalidArgumentError(f"functions of length {F.shape[1]} do not match grid of {grid.L} nodes")
    return F @ F.T / grid.L


def gram_schmidt(fs: Sequence[GridFunction], grid: Grid, tol: float = 1e-10) -> List[GridFunction]:
    """
    Modified Gram-Schmidt with one re-orthogonalization pass, under the quadrature inner product

    Args:
        fs: linearly independent grid functions, processed in order
        grid: grid the functions are sampled on
        tol: residual norm below which an input counts as dependent

    Returns:
        list of orthonormal grid functions spanning the same nested subspaces
    """
    basis: List[np.ndarray] = []
    for index, f in enumerate(fs):
        v = np.array(f, dtype=float)
        if v.shape != (grid.L,):
            raise InvalidArgumentError(f"function {index + 1} has length {v.size}, grid has {grid.L} nodes")
        for _ in range(2):
            for q in basis:
                v = v - inner_product(v, q, grid) * q
        residual = norm(v, grid)
        if residual < tol:
            raise DegenerateBasisError(
                f"function {index + 1} is numerically dependent on its predecessors (residual norm {residual:.3e})"
            )
        basis.append(v / residual)
    return basis
