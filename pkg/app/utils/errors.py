"""Exception hierarchy shared by the numerical services, the CLI and the routes"""

from typing import Any, Dict, Optional


class FuncRCError(Exception):
    """Base class for every domain error raised by the toolkit"""


class InvalidArgumentError(FuncRCError, ValueError):
    """Argument outside the documented domain (bad length, range, grid)"""


class InsufficientDataError(FuncRCError):
    """Too few curves for a covariance or cross-validation computation"""


class DegenerateBasisError(FuncRCError):
    """Gram-Schmidt met a numerically dependent input function"""


class RankDeficientError(FuncRCError):
    """Fewer positive eigenvalues than the requested rank"""


class NoFeasibleRankError(FuncRCError):
    """No rank passes both the scree cutoff and the condition-number cap"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UndefinedMetricError(FuncRCError):
    """Metric undefined for the given input (e.g. zero total variation)"""


class CSVParseError(FuncRCError):
    """Malformed CSV cell; row and column are 1-based file positions"""

    def __init__(self, path: str, row: int, column: int, value: Any):
        super().__init__(f"{path}: cannot parse value {value!r} at row {row}, column {column}")
        self.path = path
        self.row = row
        self.column = column
        self.value = value
