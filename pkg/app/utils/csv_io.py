"""
CSV and JSON input/output
Curve files carry the grid nodes as their first row and one curve per following row; scalar
responses are one column headed "y". Every float is written with 17 significant digits and
every file is written to a temporary sibling first, then renamed into place.
"""

import json
import logging
import os
import re
import tempfile
from pathlib import Path
from typing import Any, Callable, Optional, Union

import numpy as np
import pandas as pd

from .errors import CSVParseError, InvalidArgumentError
from .grid import CurveSet, Grid

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]

_RAGGED = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")


def atomic_write(path: PathLike, writer: Callable[[Any], None], mode: str = "w"):
    """Run writer on a temporary file in the target directory, then rename it onto path"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as handle:
            writer(handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_table(path: PathLike, header: bool = False) -> tuple:
    """Read a CSV as strings; returns (column names or None, values array)"""
    path = str(path)
    try:
        frame = pd.read_csv(path, header=0 if header else None, dtype=str,
                            keep_default_na=False, skip_blank_lines=True)
    except pd.errors.ParserError as e:
        match = _RAGGED.search(str(e))
        if match:
            expected, line, saw = (int(g) for g in match.groups())
            raise CSVParseError(path, line, expected + 1, f"{saw} fields") from e
        raise CSVParseError(path, 0, 0, str(e)) from e
    except pd.errors.EmptyDataError as e:
        raise CSVParseError(path, 1, 1, "") from e
    return (list(frame.columns) if header else None), frame.to_numpy(dtype=str)


def _to_float(path: PathLike, values: np.ndarray, row_offset: int) -> np.ndarray:
    """Exact decimal-to-double conversion; the first bad cell is reported with 1-based file position"""
    try:
        parsed = values.astype(float)
    except ValueError:
        for i, row in enumerate(values):
            for j, cell in enumerate(row):
                try:
                    float(cell)
                except ValueError:
                    raise CSVParseError(str(path), i + 1 + row_offset, j + 1, cell) from None
        raise
    bad = np.argwhere(~np.isfinite(parsed))
    if bad.size:
        i, j = bad[0]
        raise CSVParseError(str(path), int(i) + 1 + row_offset, int(j) + 1, values[i, j])
    return parsed


def read_curves(path: PathLike) -> CurveSet:
    """First row grid nodes, then one curve per row"""
    _, values = _read_table(path)
    if values.shape[0] < 2:
        raise CSVParseError(str(path), values.shape[0] + 1, 1, "missing curve rows")
    data = _to_float(path, values, 0)
    try:
        grid = Grid(data[0])
    except InvalidArgumentError as e:
        raise InvalidArgumentError(f"{path}: first row is not a valid grid: {e}") from e
    return CurveSet(data[1:], grid)


def write_curves(path: PathLike, curves: CurveSet):
    frame = pd.DataFrame(np.vstack([curves.grid.nodes, curves.data]))
    atomic_write(path, lambda handle: frame.to_csv(handle, header=False, index=False,
                                                   float_format=FLOAT_FORMAT, lineterminator="\n"))


def read_scalar_response(path: PathLike, column: str = "y") -> np.ndarray:
    names, values = _read_table(path, header=True)
    if column not in names:
        raise CSVParseError(str(path), 1, 1, f"missing column {column!r}")
    index = names.index(column)
    return _to_float(path, values[:, [index]], 1).ravel()


def write_scalar_response(path: PathLike, y: np.ndarray, column: str = "y"):
    frame = pd.DataFrame({column: np.asarray(y, dtype=float)})
    atomic_write(path, lambda handle: frame.to_csv(handle, index=False,
                                                   float_format=FLOAT_FORMAT, lineterminator="\n"))


def write_matrix(path: PathLike, matrix: np.ndarray):
    frame = pd.DataFrame(np.atleast_2d(np.asarray(matrix, dtype=float)))
    atomic_write(path, lambda handle: frame.to_csv(handle, header=False, index=False,
                                                   float_format=FLOAT_FORMAT, lineterminator="\n"))


def write_table(path: PathLike, frame: pd.DataFrame):
    atomic_write(path, lambda handle: frame.to_csv(handle, index=False,
                                                   float_format=FLOAT_FORMAT, lineterminator="\n"))


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps(payload: Any) -> str:
    """JSON text; floats use the shortest repr that round-trips (at most 17 significant digits)"""
    return json.dumps(payload, indent=2, default=_json_default)


def write_json(path: PathLike, payload: Any):
    text = dumps(payload)
    atomic_write(path, lambda handle: handle.write(text + "\n"))


def read_json(path: PathLike) -> Any:
    with open(path, "r") as handle:
        return json.load(handle)


def read_response(path: PathLike, grid: Optional[Grid] = None) -> Union[np.ndarray, CurveSet]:
    """Scalar response file (header "y") or a curve file"""
    with open(path, "r") as handle:
        first = handle.readline().strip()
    if first.split(",")[0].strip().strip('"') == "y":
        return read_scalar_response(path)
    curves = read_curves(path)
    if grid is not None and curves.L != grid.L:
        logger.info(f"📐 [IO] response grid has {curves.L} nodes, covariate grid {grid.L}")
    return curves
