"""
Grid Models Module

This module defines the Pydantic models for the uniform Cartesian grid, the
grid-sampled scalar fields living on it, and the viewpoints visibility is
computed from.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.utils.validation_utils import ConfigError

# Node coordinates within this many index units of an integer snap onto it
INDEX_SNAP = 1e-9


class Grid(BaseModel):
    """Uniform Cartesian lattice over an axis-aligned box."""
    model_config = ConfigDict(frozen=True)

    lo: List[float]
    hi: List[float]
    n: List[int]

    @model_validator(mode="after")
    def validate_box(self) -> "Grid":
        """Check axis counts, box orientation and node counts."""
        if not (len(self.lo) == len(self.hi) == len(self.n)):
            raise ValueError("lo, hi and n must have the same length")
        if not 1 <= len(self.lo) <= 3:
            raise ValueError("grid dimension must be 1, 2 or 3")
        for k, (a, b, count) in enumerate(zip(self.lo, self.hi, self.n)):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError(f"axis {k}: box corners must be finite")
            if not a < b:
                raise ValueError(f"axis {k}: lo must be strictly less than hi")
            if count < 2:
                raise ValueError(f"axis {k}: at least 2 nodes are required")
        return self

    @classmethod
    def square(cls, N: int, dim: int = 2, lo: float = -1.0, hi: float = 1.0) -> "Grid":
        """Grid with N nodes per axis on [lo, hi]^dim."""
        return cls(lo=[lo] * dim, hi=[hi] * dim, n=[N] * dim)

    @property
    def dim(self) -> int:
        """Number of axes."""
        return len(self.lo)

    @property
    def shape(self) -> Tuple[int, ...]:
        """Node counts as an array shape (axis 0 outermost)."""
        return tuple(self.n)

    @property
    def size(self) -> int:
        """Total number of nodes."""
        return int(np.prod(self.n))

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=np.float64)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=np.float64)

    @property
    def spacing(self) -> np.ndarray:
        """Per-axis spacing h_k = (hi_k - lo_k) / (n_k - 1)."""
        return (self.hi_array - self.lo_array) / (np.asarray(self.n, dtype=np.float64) - 1.0)

    @property
    def strides(self) -> np.ndarray:
        """Row-major strides in nodes, matching numpy C order."""
        strides = np.ones(self.dim, dtype=np.int64)
        for k in range(self.dim - 2, -1, -1):
            strides[k] = strides[k + 1] * self.n[k + 1]
        return strides

    def axis_coordinates(self, k: int) -> np.ndarray:
        """Coordinates of the nodes along axis k, computed from the index."""
        return self.lo[k] + np.arange(self.n[k], dtype=np.float64) * self.spacing[k]

    def node_coordinates(self) -> np.ndarray:
        """Array of shape (*n, dim) holding every node's coordinates."""
        axes = [self.axis_coordinates(k) for k in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def contains(self, p: Sequence[float], tol: float = 0.0) -> bool:
        """Whether p lies in the closed box."""
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.dim,):
            return False
        return bool(np.all(p >= self.lo_array - tol) and np.all(p <= self.hi_array + tol))

    def index_coordinates(self, p: Sequence[float]) -> np.ndarray:
        """
        Continuous index coordinates s = (p - lo) / h of a point.

        Values within INDEX_SNAP of an integer are snapped onto it so that
        node coordinates map back to their exact index.
        """
        s = (np.asarray(p, dtype=np.float64) - self.lo_array) / self.spacing
        rounded = np.round(s)
        snap = np.abs(s - rounded) <= INDEX_SNAP
        s = np.where(snap, rounded, s)
        return np.clip(s, 0.0, np.asarray(self.n, dtype=np.float64) - 1.0)


class Viewpoint(BaseModel):
    """A point x* from which visibility is computed; need not be a grid node."""
    model_config = ConfigDict(frozen=True)

    x_star: List[float]

    @field_validator("x_star")
    @classmethod
    def validate_finite(cls, v: List[float]) -> List[float]:
        """Reject empty or non-finite coordinates."""
        if not v:
            raise ValueError("viewpoint needs at least one coordinate")
        if not all(math.isfinite(c) for c in v):
            raise ValueError("viewpoint coordinates must be finite")
        return v

    @property
    def point(self) -> np.ndarray:
        return np.asarray(self.x_star, dtype=np.float64)

    def check_inside(self, grid: Grid, field: str = "viewpoint") -> None:
        """
        Ensure the viewpoint lies inside the closed grid box.

        Raises:
            ConfigError: If the dimension differs or the point is outside.
        """
        if len(self.x_star) != grid.dim:
            raise ConfigError(
                f"has {len(self.x_star)} coordinates but the grid is {grid.dim}D", field=field
            )
        if not grid.contains(self.x_star):
            raise ConfigError(f"{self.x_star} lies outside the box {grid.lo}..{grid.hi}", field=field)


class ViewpointSet(BaseModel):
    """Viewpoints x*_1..x*_r; duplicates are allowed."""
    viewpoints: List[Viewpoint] = Field(default_factory=list)

    @classmethod
    def of(cls, *points: Sequence[float]) -> "ViewpointSet":
        return cls(viewpoints=[Viewpoint(x_star=list(p)) for p in points])

    def check_inside(self, grid: Grid) -> None:
        """
        Ensure the set is non-empty and every viewpoint lies in the box.

        Raises:
            ConfigError: If the set is empty or a viewpoint is invalid.
        """
        if not self.viewpoints:
            raise ConfigError("at least one viewpoint is required", field="viewpoints")
        for i, vp in enumerate(self.viewpoints):
            vp.check_inside(grid, field=f"viewpoints.{i}")

    def __len__(self) -> int:
        return len(self.viewpoints)


class ScalarField(BaseModel):
    """Real values sampled at every node of a grid, row-major."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid
    values: np.ndarray

    @model_validator(mode="after")
    def validate_values(self) -> "ScalarField":
        """Coerce to float64 with the grid's shape and require finite values."""
        values = np.asarray(self.values, dtype=np.float64)
        if values.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {values.size}")
        values = np.ascontiguousarray(values.reshape(self.grid.shape))
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.values = values
        return self

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ScalarField":
        return cls(grid=grid, values=np.full(grid.shape, float(c)))

    @property
    def flat(self) -> np.ndarray:
        """Row-major view of the values."""
        return self.values.reshape(-1)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        """New field on the same grid."""
        return ScalarField(grid=self.grid, values=values)

    def at(self, i: Sequence[int]) -> float:
        return float(self.values[tuple(i)])

    def same_grid(self, other: "ScalarField") -> bool:
        return self.grid == other.grid


class BooleanField(BaseModel):
    """A per-node mask on a grid, e.g. a visibility set."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid
    mask: np.ndarray
    alpha: Optional[float] = None

    @model_validator(mode="after")
    def validate_mask(self) -> "BooleanField":
        mask = np.asarray(self.mask, dtype=bool)
        if mask.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} entries, got {mask.size}")
        self.mask = mask.reshape(self.grid.shape)
        return self

    @property
    def count(self) -> int:
        """Number of True nodes."""
        return int(self.mask.sum())

    def as_field(self) -> ScalarField:
        """The mask as a 0/1 scalar field for export."""
        return ScalarField(grid=self.grid, values=self.mask.astype(np.float64))
