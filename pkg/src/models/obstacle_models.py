"""
Obstacle Models Module

This module defines the declarative obstacle description: primitive shapes,
point clouds, analytic callbacks and the combinator tree joining them.

Sign convention: an obstacle function g is positive strictly inside obstacle
material and negative strictly outside.
"""

import math
from typing import Annotated, Any, Callable, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator
from scipy.spatial import cKDTree


def _finite(values: List[float], name: str) -> List[float]:
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"{name} must be finite")
    return values


class _SpecBase(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def children_specs(self) -> List["ObstacleSpec"]:
        """Direct children in the combinator tree."""
        return []

    def point_dims(self) -> List[int]:
        """Dimensions implied by the coordinates in this subtree."""
        dims = []
        for child in self.children_specs():
            dims.extend(child.point_dims())
        return dims


class ConstantSpec(_SpecBase):
    """g(x) = value."""
    kind: Literal["constant"] = "constant"
    value: float


class ConeSpec(_SpecBase):
    """g(x) = apex - slope * |x - center|."""
    kind: Literal["cone"] = "cone"
    center: List[float]
    slope: float = 1.0
    apex: float = 0.0

    @field_validator("center")
    @classmethod
    def validate_center(cls, v: List[float]) -> List[float]:
        return _finite(v, "center")

    def point_dims(self) -> List[int]:
        return [len(self.center)]


class BallSpec(_SpecBase):
    """g(x) = radius - |x - center|."""
    kind: Literal["ball"] = "ball"
    center: List[float]
    radius: float = Field(ge=0.0)

    @field_validator("center")
    @classmethod
    def validate_center(cls, v: List[float]) -> List[float]:
        return _finite(v, "center")

    def point_dims(self) -> List[int]:
        return [len(self.center)]


class BoxSpec(_SpecBase):
    """
    Weighted max-norm box: g(x) = radius - max_k weights_k * a_k(x).

    a_k = |x_k - center_k| on ordinary axes and x_k - center_k on the axes
    listed in signed_axes (a box open toward -infinity along that axis, e.g. a
    building standing on the ground).
    """
    kind: Literal["box"] = "box"
    center: List[float]
    radius: float = 0.0
    weights: Optional[List[float]] = None
    signed_axes: List[int] = Field(default_factory=list)

    @field_validator("center")
    @classmethod
    def validate_center(cls, v: List[float]) -> List[float]:
        return _finite(v, "center")

    @model_validator(mode="after")
    def validate_axes(self) -> "BoxSpec":
        dim = len(self.center)
        if self.weights is not None:
            if len(self.weights) != dim:
                raise ValueError("weights must have one entry per axis")
            if any(w <= 0 for w in self.weights):
                raise ValueError("weights must be positive")
        if any(a < 0 or a >= dim for a in self.signed_axes):
            raise ValueError("signed_axes out of range")
        return self

    def point_dims(self) -> List[int]:
        return [len(self.center)]


class HalfspaceSpec(_SpecBase):
    """g(x) = offset - normal . x, positive on the side normal points away from."""
    kind: Literal["halfspace"] = "halfspace"
    normal: List[float]
    offset: float = 0.0

    @field_validator("normal")
    @classmethod
    def validate_normal(cls, v: List[float]) -> List[float]:
        _finite(v, "normal")
        if not any(c != 0 for c in v):
            raise ValueError("normal must be non-zero")
        return v

    def point_dims(self) -> List[int]:
        return [len(self.normal)]


class PointCloud(BaseModel):
    """Points inflated to balls of radius r: g(x) = r - dist(x, points)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: np.ndarray
    radius: float = Field(gt=0.0)
    _tree: Optional[cKDTree] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def validate_points(self) -> "PointCloud":
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("point cloud must be a non-empty (m, dim) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud coordinates must be finite")
        self.points = np.ascontiguousarray(pts)
        return self

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def tree(self) -> cKDTree:
        """k-d tree over the points, built on first use."""
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree


class PointCloudSpec(_SpecBase):
    """
    Point-cloud obstacle given inline or by file path.

    radius defaults to twice the largest grid spacing when sampled on a grid.
    """
    kind: Literal["point-cloud"] = "point-cloud"
    path: Optional[str] = None
    points: Optional[List[List[float]]] = None
    radius: Optional[float] = Field(default=None, gt=0.0)
    _cloud: Optional[PointCloud] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def validate_source(self) -> "PointCloudSpec":
        if (self.path is None) == (self.points is None):
            raise ValueError("exactly one of path or points is required")
        if self.points is not None and not self.points:
            raise ValueError("points must not be empty")
        return self

    def point_dims(self) -> List[int]:
        if self.points:
            return [len(self.points[0])]
        return []


class AnalyticSpec(_SpecBase):
    """g given by a callback mapping an (m, dim) array of points to m values."""
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    kind: Literal["analytic"] = "analytic"
    func: Callable[[np.ndarray], Any] = Field(exclude=True)
    label: str = "analytic"


class NegateSpec(_SpecBase):
    """-child."""
    kind: Literal["negate"] = "negate"
    child: "ObstacleSpec"

    def children_specs(self) -> List["ObstacleSpec"]:
        return [self.child]


class MinSpec(_SpecBase):
    """Pointwise minimum of the children."""
    kind: Literal["min"] = "min"
    children: List["ObstacleSpec"] = Field(min_length=1)

    def children_specs(self) -> List["ObstacleSpec"]:
        return list(self.children)


class MaxSpec(_SpecBase):
    """Pointwise maximum of the children."""
    kind: Literal["max"] = "max"
    children: List["ObstacleSpec"] = Field(min_length=1)

    def children_specs(self) -> List["ObstacleSpec"]:
        return list(self.children)


class ScaleSpec(_SpecBase):
    """factor * child."""
    kind: Literal["scale"] = "scale"
    factor: float
    child: "ObstacleSpec"

    def children_specs(self) -> List["ObstacleSpec"]:
        return [self.child]


class OffsetSpec(_SpecBase):
    """child + value."""
    kind: Literal["offset"] = "offset"
    value: float
    child: "ObstacleSpec"

    def children_specs(self) -> List["ObstacleSpec"]:
        return [self.child]


ObstacleSpec = Annotated[
    Union[
        ConstantSpec,
        ConeSpec,
        BallSpec,
        BoxSpec,
        HalfspaceSpec,
        PointCloudSpec,
        AnalyticSpec,
        NegateSpec,
        MinSpec,
        MaxSpec,
        ScaleSpec,
        OffsetSpec,
    ],
    Field(discriminator="kind"),
]

for _model in (NegateSpec, MinSpec, MaxSpec, ScaleSpec, OffsetSpec):
    _model.model_rebuild()
