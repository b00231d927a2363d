"""
Field I/O Module

This module reads and writes grid fields and point clouds.

Text field format (self-describing, row-major, 17 significant digits):

    dim D
    n n1 ... nD
    lo l1 ... lD
    hi h1 ... hD
    <one value per line>

VTK format: legacy ASCII STRUCTURED_POINTS, x varying fastest, missing axes
padded with extent 1.
"""

import logging
import os
from typing import Dict, List, Optional

import numpy as np

from src.models.grid_models import Grid, ScalarField
from src.utils.validation_utils import FieldIOError

# Set up logging
logger = logging.getLogger(__name__)

FORMATS = ("text", "vtk-ascii")
DEFAULT_EXTENSIONS = {"text": ".txt", "vtk-ascii": ".vtk"}


def field_extensions(overrides: Optional[Dict[str, str]] = None) -> Dict[str, str]:
    """
    File extension per field format, with overrides from FIELD_FORMATS.

    Overrides for formats this module cannot write are ignored with a warning.
    """
    extensions = dict(DEFAULT_EXTENSIONS)
    for fmt, ext in (overrides or {}).items():
        if fmt not in FORMATS:
            logger.warning(f"Ignoring extension for unknown field format '{fmt}'")
            continue
        extensions[fmt] = ext if ext.startswith(".") else f".{ext}"
    return extensions


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def format_text(field: ScalarField) -> str:
    """Render a field in the text format."""
    grid = field.grid
    lines = [
        f"dim {grid.dim}",
        "n " + " ".join(str(c) for c in grid.n),
        "lo " + " ".join(_fmt(v) for v in grid.lo),
        "hi " + " ".join(_fmt(v) for v in grid.hi),
    ]
    lines.extend(_fmt(v) for v in field.flat)
    return "\n".join(lines) + "\n"


def format_vtk(field: ScalarField, name: str = "u") -> str:
    """Render a field as a legacy ASCII VTK structured-points dataset."""
    grid = field.grid
    dims = list(grid.n) + [1] * (3 - grid.dim)
    origin = list(grid.lo) + [0.0] * (3 - grid.dim)
    spacing = list(grid.spacing) + [1.0] * (3 - grid.dim)
    lines = [
        "# vtk DataFile Version 3.0",
        f"starshade field {name}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(d) for d in dims),
        "ORIGIN " + " ".join(_fmt(v) for v in origin),
        "SPACING " + " ".join(_fmt(v) for v in spacing),
        f"POINT_DATA {grid.size}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    # VTK expects x to vary fastest
    lines.extend(_fmt(v) for v in field.values.ravel(order="F"))
    return "\n".join(lines) + "\n"


def export_field(field: ScalarField, path: str, fmt: str = "text", name: str = "u") -> str:
    """
    Write a field to disk.

    Args:
        field: Field to write.
        path: Destination file.
        fmt: "text" or "vtk-ascii".
        name: Scalar name recorded in VTK output.

    Returns:
        The path written.

    Raises:
        FieldIOError: On an unknown format or a failed write.
    """
    if fmt == "text":
        content = format_text(field)
    elif fmt == "vtk-ascii":
        content = format_vtk(field, name=name)
    else:
        raise FieldIOError(f"unknown field format '{fmt}' (expected one of {', '.join(FORMATS)})")

    try:
        out_dir = os.path.dirname(path)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        with open(path, "w", newline="\n") as f:
            f.write(content)
    except OSError as e:
        raise FieldIOError(f"cannot write {path}: {e}") from e

    logger.info(f"Wrote {fmt} field '{name}' to {path}")
    return path


def _read_lines(path: str) -> List[str]:
    try:
        with open(path, "r") as f:
            return f.read().splitlines()
    except OSError as e:
        raise FieldIOError(f"cannot read {path}: {e}") from e


def _header(lines: List[str], pos: int, key: str, path: str) -> List[str]:
    if pos >= len(lines):
        raise FieldIOError(f"{path}: missing '{key}' header")
    parts = lines[pos].split()
    if not parts or parts[0] != key:
        raise FieldIOError(f"{path}, line {pos + 1}: expected '{key}'")
    return parts[1:]


def parse_text(lines: List[str], path: str = "<text>") -> ScalarField:
    """Parse the text field format."""
    try:
        dim = int(_header(lines, 0, "dim", path)[0])
        n = [int(v) for v in _header(lines, 1, "n", path)]
        lo = [float(v) for v in _header(lines, 2, "lo", path)]
        hi = [float(v) for v in _header(lines, 3, "hi", path)]
        values = np.array([float(v) for v in lines[4:] if v.strip()], dtype=np.float64)
    except (ValueError, IndexError) as e:
        raise FieldIOError(f"{path}: malformed field file: {e}") from e

    if not (len(n) == len(lo) == len(hi) == dim):
        raise FieldIOError(f"{path}: header lengths do not match dim {dim}")
    try:
        grid = Grid(lo=lo, hi=hi, n=n)
        return ScalarField(grid=grid, values=values)
    except ValueError as e:
        raise FieldIOError(f"{path}: {e}") from e


def parse_vtk(lines: List[str], path: str = "<vtk>") -> ScalarField:
    """Parse a structured-points file written by format_vtk."""
    header = {}
    data_start = None
    for pos, line in enumerate(lines):
        parts = line.split()
        if not parts:
            continue
        if parts[0] in ("DIMENSIONS", "ORIGIN", "SPACING"):
            header[parts[0]] = parts[1:]
        elif parts[0] == "LOOKUP_TABLE":
            data_start = pos + 1
            break
    if data_start is None or any(k not in header for k in ("DIMENSIONS", "ORIGIN", "SPACING")):
        raise FieldIOError(f"{path}: not a structured-points VTK file")

    try:
        dims = [int(v) for v in header["DIMENSIONS"]]
        origin = [float(v) for v in header["ORIGIN"]]
        spacing = [float(v) for v in header["SPACING"]]
        values = np.array([float(v) for line in lines[data_start:] for v in line.split()])
    except ValueError as e:
        raise FieldIOError(f"{path}: malformed VTK data: {e}") from e

    axes = [k for k in range(3) if dims[k] > 1]
    n = [dims[k] for k in axes]
    lo = [origin[k] for k in axes]
    hi = [origin[k] + (dims[k] - 1) * spacing[k] for k in axes]
    if values.size != int(np.prod(dims)):
        raise FieldIOError(f"{path}: expected {int(np.prod(dims))} values, got {values.size}")
    try:
        grid = Grid(lo=lo, hi=hi, n=n)
        ordered = values.reshape(dims, order="F").reshape(grid.shape)
        return ScalarField(grid=grid, values=ordered)
    except ValueError as e:
        raise FieldIOError(f"{path}: {e}") from e


def import_field(path: str) -> ScalarField:
    """
    Read a field written by export_field; the format is detected from the header.

    Raises:
        FieldIOError: If the file is missing or malformed.
    """
    lines = _read_lines(path)
    if lines and lines[0].startswith("# vtk"):
        return parse_vtk(lines, path)
    return parse_text(lines, path)


def load_point_cloud(path: str, dim: Optional[int] = None) -> np.ndarray:
    """
    Read a point cloud: one point per line, whitespace-separated reals.

    Blank lines and lines starting with '#' are ignored.

    Args:
        path: File to read.
        dim: Required number of columns, if known.

    Returns:
        Array of shape (m, dim).

    Raises:
        FieldIOError: If the file is unreadable, empty or inconsistent.
    """
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            row = [float(v) for v in stripped.split()]
        except ValueError as e:
            raise FieldIOError(f"{path}, line {lineno}: {e}") from e
        if dim is not None and len(row) != dim:
            raise FieldIOError(f"{path}, line {lineno}: expected {dim} columns, got {len(row)}")
        if rows and len(row) != len(rows[0]):
            raise FieldIOError(f"{path}, line {lineno}: inconsistent column count")
        rows.append(row)

    if not rows:
        raise FieldIOError(f"{path}: no points found")
    points = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(points)):
        raise FieldIOError(f"{path}: non-finite coordinates")
    logger.info(f"Loaded {points.shape[0]} points from {path}")
    return points
