"""
Obstacle Tools Module

This module evaluates obstacle specifications: pointwise on arbitrary points,
sampled on a grid, and for point clouds as an inflated distance field.
"""

import logging
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
from pydantic import TypeAdapter, ValidationError

from src.models.grid_models import Grid, ScalarField
from src.models.obstacle_models import (
    AnalyticSpec,
    BallSpec,
    BoxSpec,
    ConeSpec,
    ConstantSpec,
    HalfspaceSpec,
    MaxSpec,
    MinSpec,
    NegateSpec,
    ObstacleSpec,
    OffsetSpec,
    PointCloud,
    PointCloudSpec,
    ScaleSpec,
)
from src.tools.field_io import load_point_cloud
from src.utils.validation_utils import ConfigError, config_error_from_validation

# Set up logging
logger = logging.getLogger(__name__)

_SPEC_ADAPTER = TypeAdapter(ObstacleSpec)

# Candidates re-measured after the k-d tree query
NEAREST_CANDIDATES = 4


def parse_obstacle(data: Dict[str, Any]) -> ObstacleSpec:
    """
    Build an obstacle spec tree from plain data (e.g. parsed YAML).

    Raises:
        ConfigError: If the data does not describe a valid tree.
    """
    try:
        return _SPEC_ADAPTER.validate_python(data)
    except ValidationError as e:
        raise config_error_from_validation(e) from e


def _norm(diff: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _eval_constant(spec: ConstantSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    return np.full(pts.shape[0], spec.value, dtype=np.float64)


def _eval_cone(spec: ConeSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    return spec.apex - spec.slope * _norm(pts - np.asarray(spec.center))


def _eval_ball(spec: BallSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    return spec.radius - _norm(pts - np.asarray(spec.center))


def _eval_box(spec: BoxSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    diff = pts - np.asarray(spec.center)
    terms = np.abs(diff)
    for axis in spec.signed_axes:
        terms[:, axis] = diff[:, axis]
    if spec.weights is not None:
        terms = terms * np.asarray(spec.weights)
    return spec.radius - terms.max(axis=1)


def _eval_halfspace(spec: HalfspaceSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    return spec.offset - pts @ np.asarray(spec.normal, dtype=np.float64)


def _eval_point_cloud(spec: PointCloudSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    cloud = resolve_cloud(spec, grid)
    return cloud.radius - nearest_distance(cloud, pts)


def _eval_analytic(spec: AnalyticSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    values = np.asarray(spec.func(pts), dtype=np.float64).reshape(-1)
    if values.shape[0] != pts.shape[0]:
        raise ConfigError(f"callback returned {values.shape[0]} values for {pts.shape[0]} points",
                          field=spec.label)
    return values


def _eval_negate(spec: NegateSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    return -_evaluate(spec.child, pts, grid)


def _eval_min(spec: MinSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    result = _evaluate(spec.children[0], pts, grid)
    for child in spec.children[1:]:
        result = np.minimum(result, _evaluate(child, pts, grid))
    return result


def _eval_max(spec: MaxSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    result = _evaluate(spec.children[0], pts, grid)
    for child in spec.children[1:]:
        result = np.maximum(result, _evaluate(child, pts, grid))
    return result


def _eval_scale(spec: ScaleSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    return spec.factor * _evaluate(spec.child, pts, grid)


def _eval_offset(spec: OffsetSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    return _evaluate(spec.child, pts, grid) + spec.value


_EVALUATORS: Dict[str, Callable[[Any, np.ndarray, Optional[Grid]], np.ndarray]] = {
    "constant": _eval_constant,
    "cone": _eval_cone,
    "ball": _eval_ball,
    "box": _eval_box,
    "halfspace": _eval_halfspace,
    "point-cloud": _eval_point_cloud,
    "analytic": _eval_analytic,
    "negate": _eval_negate,
    "min": _eval_min,
    "max": _eval_max,
    "scale": _eval_scale,
    "offset": _eval_offset,
}


def _evaluate(spec: ObstacleSpec, pts: np.ndarray, grid: Optional[Grid]) -> np.ndarray:
    return _EVALUATORS[spec.kind](spec, pts, grid)


def eval_points(spec: ObstacleSpec, points: np.ndarray, grid: Optional[Grid] = None) -> np.ndarray:
    """
    Evaluate g at many points at once.

    Args:
        spec: Obstacle spec tree.
        points: Array of shape (..., dim).
        grid: Grid used to resolve grid-dependent defaults (point-cloud radius).

    Returns:
        Array of shape points.shape[:-1].
    """
    points = np.asarray(points, dtype=np.float64)
    flat = points.reshape(-1, points.shape[-1])
    return _evaluate(spec, flat, grid).reshape(points.shape[:-1])


def eval_obstacle(spec: ObstacleSpec, p: Sequence[float], grid: Optional[Grid] = None) -> float:
    """
    Evaluate g at a single point.

    Args:
        spec: Obstacle spec tree.
        p: The point.
        grid: Optional grid for grid-dependent defaults.

    Returns:
        g(p).
    """
    return float(eval_points(spec, np.asarray(p, dtype=np.float64)[None, :], grid)[0])


def sample_obstacle(spec: ObstacleSpec, grid: Grid) -> ScalarField:
    """
    Sample g at every grid node.

    Args:
        spec: Obstacle spec tree.
        grid: The grid.

    Returns:
        Field with field[i] = g(node_coord(i)).
    """
    values = eval_points(spec, grid.node_coordinates(), grid)
    logger.debug(f"Sampled obstacle '{spec.kind}' on grid {grid.shape}: "
                 f"min={values.min():.6g} max={values.max():.6g}")
    return ScalarField(grid=grid, values=values)


def resolve_cloud(spec: PointCloudSpec, grid: Optional[Grid] = None) -> PointCloud:
    """
    Turn a point-cloud spec into a PointCloud, loading the file if needed.

    The loaded cloud is cached on the PointCloudSpec.

    Raises:
        ConfigError: If no radius is given and no grid is available for the default.
        FieldIOError: If the point file cannot be read.
    """
    radius = spec.radius
    if radius is None:
        if grid is None:
            raise ConfigError("a radius is required when no grid is given", field="obstacle.radius")
        radius = default_cloud_radius(grid)

    cached = spec._cloud
    if cached is not None and cached.radius == radius:
        return cached

    if spec.points is not None:
        points = np.asarray(spec.points, dtype=np.float64)
    else:
        points = load_point_cloud(spec.path, dim=grid.dim if grid is not None else None)
    cloud = PointCloud(points=points, radius=radius)
    spec._cloud = cloud
    logger.info(f"Point cloud ready: {cloud.points.shape[0]} points, radius {radius:.6g}")
    return cloud


def default_cloud_radius(grid: Grid) -> float:
    """Default inflation radius: twice the largest grid spacing."""
    return 2.0 * float(grid.spacing.max())


def nearest_distance(cloud: PointCloud, queries: np.ndarray) -> np.ndarray:
    """
    Euclidean distance from each query to its nearest cloud point.

    The k-d tree only proposes candidates; distances are re-measured with the
    same arithmetic as a brute-force scan, so the result equals the
    brute-force minimum.
    """
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, cloud.dim)
    k = min(NEAREST_CANDIDATES, cloud.points.shape[0])
    _, candidates = cloud.tree.query(queries, k=k)
    candidates = np.asarray(candidates).reshape(queries.shape[0], k)
    diff = queries[:, None, :] - cloud.points[candidates]
    return _norm(diff).min(axis=1)


def cloud_to_field(cloud: PointCloud, grid: Grid) -> ScalarField:
    """
    Inflated signed distance of a point cloud sampled on a grid.

    Args:
        cloud: Points and inflation radius.
        grid: The grid.

    Returns:
        Field with field[i] = r - dist(node_coord(i), cloud).
    """
    if cloud.dim != grid.dim:
        raise ConfigError(f"cloud is {cloud.dim}D but the grid is {grid.dim}D", field="obstacle.points")
    nodes = grid.node_coordinates().reshape(-1, grid.dim)
    values = cloud.radius - nearest_distance(cloud, nodes)
    return ScalarField(grid=grid, values=values.reshape(grid.shape))


def check_obstacle_dim(spec: ObstacleSpec, dim: int) -> None:
    """
    Ensure every coordinate in the tree matches the grid dimension.

    Raises:
        ConfigError: On the first mismatch.
    """
    for d in spec.point_dims():
        if d != dim:
            raise ConfigError(f"obstacle uses {d}D coordinates on a {dim}D grid", field="obstacle")
