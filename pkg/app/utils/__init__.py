"""Utility functions imports"""

from .errors import (
    FuncRCError,
    InvalidArgumentError,
    InsufficientDataError,
    DegenerateBasisError,
    RankDeficientError,
    NoFeasibleRankError,
    UndefinedMetricError,
    CSVParseError
)
from .grid import (
    Grid,
    GridFunction,
    CurveSet,
    regular_grid,
    sample_adequate_grid,
    inner_product,
    norm,
    gram_matrix,
    gram_schmidt
)

__all__ = [
    'FuncRCError',
    'InvalidArgumentError',
    'InsufficientDataError',
    'DegenerateBasisError',
    'RankDeficientError',
    'NoFeasibleRankError',
    'UndefinedMetricError',
    'CSVParseError',
    'Grid',
    'GridFunction',
    'CurveSet',
    'regular_grid',
    'sample_adequate_grid',
    'inner_product',
    'norm',
    'gram_matrix',
    'gram_schmidt'
]
