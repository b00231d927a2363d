"""
Grid Tools Module

This module provides the geometric operations on the uniform grid: node
coordinates, piecewise-multilinear interpolation and the upwind foot point of
the ray from a node toward the viewpoint.
"""

import logging
from typing import Sequence

import numpy as np

from src.models.grid_models import Grid, ScalarField, Viewpoint
from src.tools.sweep_kernels import foot_stencil, interp_index
from src.utils.validation_utils import DegenerateRayError, DomainError, GridIndexError

# Set up logging
logger = logging.getLogger(__name__)


def node_coord(grid: Grid, i: Sequence[int]) -> np.ndarray:
    """
    Coordinates of the node with multi-index i.

    Args:
        grid: The grid.
        i: Multi-index, one integer per axis.

    Returns:
        lo + i * h, computed directly from the index.

    Raises:
        GridIndexError: If i has the wrong length or lies outside the grid.
    """
    if len(i) != grid.dim:
        raise GridIndexError(f"index {tuple(i)} has {len(i)} entries, grid is {grid.dim}D")
    idx = np.asarray(i, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= np.asarray(grid.n)):
        raise GridIndexError(f"index {tuple(i)} outside grid of shape {grid.shape}")
    return grid.lo_array + idx * grid.spacing


def interp(field: ScalarField, p: Sequence[float]) -> float:
    """
    Piecewise-multilinear interpolant of a field at a point.

    Exact at nodes; on a cell edge or face it reduces to linear or bilinear
    interpolation of that edge's or face's corners.

    Args:
        field: Field to interpolate.
        p: Point inside the closed grid box.

    Returns:
        Interpolated value.

    Raises:
        DomainError: If p lies outside the box.
    """
    grid = field.grid
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (grid.dim,) or not grid.contains(p):
        raise DomainError(f"point {p.tolist()} outside the box {grid.lo}..{grid.hi}")

    s = grid.index_coordinates(p)
    return float(interp_index(field.flat, np.asarray(grid.n, dtype=np.int64), grid.strides, s))


def viewpoint_index(grid: Grid, vp: Viewpoint) -> np.ndarray:
    """
    Index coordinates s* of a viewpoint, snapped onto nearby grid lines.

    Raises:
        ConfigError: If the viewpoint lies outside the box.
    """
    vp.check_inside(grid)
    return grid.index_coordinates(vp.x_star)


def ray_foot(grid: Grid, x: Sequence[float], vp: Viewpoint) -> np.ndarray:
    """
    Foot point x~ of the ray from node x toward the viewpoint.

    x~ is the first point, walking from x to x*, where the segment meets the
    boundary of the box spanned by x's immediate neighbours. If x* lies inside
    that box, x* itself is returned. When the ray passes exactly through a
    neighbour node the exit face is taken on the lowest axis.

    Args:
        grid: The grid.
        x: A grid node.
        vp: The viewpoint.

    Returns:
        The foot point.

    Raises:
        DomainError: If x is not a grid node.
        DegenerateRayError: If x coincides with the viewpoint.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (grid.dim,) or not grid.contains(x):
        raise DomainError(f"point {x.tolist()} outside the box {grid.lo}..{grid.hi}")
    s = grid.index_coordinates(x)
    if not np.array_equal(s, np.round(s)):
        raise DomainError(f"point {x.tolist()} is not a grid node")

    idx = s.astype(np.int64)
    s_star = viewpoint_index(grid, vp)
    frac = np.empty(grid.dim, dtype=np.float64)
    step = np.empty(grid.dim, dtype=np.int64)
    emax, _ = foot_stencil(idx, s_star, grid.spacing, False, frac, step)

    if emax == 0.0:
        raise DegenerateRayError(f"ray from {x.tolist()} to the viewpoint has zero length")
    if emax <= 1.0:
        return vp.point.copy()

    foot = idx + frac * step
    return grid.lo_array + foot * grid.spacing
