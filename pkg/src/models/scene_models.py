"""
Scene Models Module

This module defines the Pydantic models for solver configuration, ray sampling,
multi-viewpoint composition trees and the scene files the CLI reads.
"""

from typing import Annotated, Any, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from src.models.grid_models import Grid, Viewpoint
from src.models.obstacle_models import ObstacleSpec

Envelope = Literal["upper", "lower"]


class SolverConfig(BaseModel):
    """Settings for a single sweep solve."""
    envelope: Envelope = "upper"
    viewpoint: Viewpoint
    # g(x*); defaults to the interpolated obstacle when None
    anchor_value: Optional[float] = None


class RaySamplingConfig(BaseModel):
    """Arc-length sampling step along rays for the ray oracle."""
    step: float = Field(gt=0.0)
    batch_points: int = Field(default=2_000_000, gt=0)
    workers: int = Field(default=1, ge=1)

    @classmethod
    def for_grid(cls, grid: Grid, divisor: float = 8.0, **kwargs: Any) -> "RaySamplingConfig":
        """Step of min(h) / divisor."""
        return cls(step=float(grid.spacing.min()) / divisor, **kwargs)


class LeafExpr(BaseModel):
    """Per-viewpoint solution number `index`."""
    op: Literal["leaf"] = "leaf"
    index: int = Field(ge=0)

    def max_index(self) -> int:
        return self.index


class MinExpr(BaseModel):
    """Visible by any child."""
    op: Literal["min"] = "min"
    children: List["ComposeExpr"] = Field(min_length=1)

    def max_index(self) -> int:
        return max(child.max_index() for child in self.children)


class MaxExpr(BaseModel):
    """Visible by every child."""
    op: Literal["max"] = "max"
    children: List["ComposeExpr"] = Field(min_length=1)

    def max_index(self) -> int:
        return max(child.max_index() for child in self.children)


class KthSmallestExpr(BaseModel):
    """k-th smallest child value: visible by at least k children."""
    op: Literal["kth_smallest"] = "kth_smallest"
    k: int = Field(ge=1)
    children: List["ComposeExpr"] = Field(min_length=1)

    @model_validator(mode="after")
    def validate_k(self) -> "KthSmallestExpr":
        if self.k > len(self.children):
            raise ValueError(f"k={self.k} exceeds the {len(self.children)} children")
        return self

    def max_index(self) -> int:
        return max(child.max_index() for child in self.children)


ComposeExpr = Annotated[
    Union[LeafExpr, MinExpr, MaxExpr, KthSmallestExpr],
    Field(discriminator="op"),
]

for _model in (MinExpr, MaxExpr, KthSmallestExpr):
    _model.model_rebuild()


class SceneConfig(BaseModel):
    """A complete visibility problem as read from a scene file."""
    model_config = ConfigDict(extra="forbid")

    name: str = "scene"
    description: str = ""
    grid: Grid
    obstacle: ObstacleSpec
    viewpoints: List[Viewpoint] = Field(min_length=1)
    semantics: Literal["any", "all", "custom"] = "any"
    compose: Optional[ComposeExpr] = None
    alpha: float = 0.0
    envelope: Envelope = "upper"
    oracle_step: Optional[float] = Field(default=None, gt=0.0)
    clamp_at_viewpoint: bool = False

    @field_validator("viewpoints", mode="before")
    @classmethod
    def coerce_viewpoints(cls, v: Any) -> Any:
        """Accept bare coordinate lists as well as {x_star: [...]} mappings."""
        if isinstance(v, list):
            return [{"x_star": list(p)} if isinstance(p, (list, tuple)) else p for p in v]
        return v

    @field_validator("viewpoints")
    @classmethod
    def validate_viewpoints(cls, v: List[Viewpoint], info: ValidationInfo) -> List[Viewpoint]:
        """Every viewpoint must lie in the closed grid box."""
        grid = info.data.get("grid")
        if grid is None:
            return v
        for i, vp in enumerate(v):
            if len(vp.x_star) != grid.dim:
                raise ValueError(f"viewpoint {i} has {len(vp.x_star)} coordinates, grid is {grid.dim}D")
            if not grid.contains(vp.x_star):
                raise ValueError(f"viewpoint {i} {vp.x_star} lies outside the grid box")
        return v

    @field_validator("obstacle")
    @classmethod
    def validate_obstacle(cls, v: ObstacleSpec, info: ValidationInfo) -> ObstacleSpec:
        """Obstacle coordinates must match the grid dimension."""
        grid = info.data.get("grid")
        if grid is None:
            return v
        for d in v.point_dims():
            if d != grid.dim:
                raise ValueError(f"obstacle uses {d}D coordinates on a {grid.dim}D grid")
        return v

    @field_validator("compose")
    @classmethod
    def validate_compose(cls, v: Optional[ComposeExpr], info: ValidationInfo) -> Optional[ComposeExpr]:
        """Leaves must refer to existing viewpoints."""
        viewpoints = info.data.get("viewpoints")
        if v is not None and viewpoints is not None and v.max_index() >= len(viewpoints):
            raise ValueError("compose tree refers to a viewpoint that does not exist")
        return v

    @field_validator("envelope")
    @classmethod
    def validate_envelope(cls, v: str, info: ValidationInfo) -> str:
        viewpoints = info.data.get("viewpoints")
        if v == "lower" and viewpoints is not None and len(viewpoints) > 1:
            raise ValueError("the lower envelope is defined for a single viewpoint")
        return v

    @model_validator(mode="after")
    def validate_semantics(self) -> "SceneConfig":
        if self.semantics == "custom" and self.compose is None:
            raise ValueError("compose: semantics 'custom' requires a compose tree")
        return self
