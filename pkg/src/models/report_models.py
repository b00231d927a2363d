"""
Report Models Module

This module defines Pydantic models for solver results and the convergence
study table.
"""

import math
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from src.models.grid_models import BooleanField, ScalarField, Viewpoint


class SolveReport(BaseModel):
    """Result of a single sweep solve."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    solution: ScalarField
    max_abs_residual: float
    sweep_node_count: int
    wall_time: float
    envelope: str = "upper"
    viewpoint: Optional[Viewpoint] = None
    # g(x*) used at the anchor; pass it back for an idempotent re-solve
    anchor_value: Optional[float] = None
    max_visits: int = 1

    @property
    def single_visit(self) -> bool:
        """Whether every node was updated exactly once."""
        return self.sweep_node_count == self.solution.grid.size and self.max_visits == 1

    def summary(self) -> Dict[str, Any]:
        """Plain values for logging and the CLI summary."""
        return {
            "envelope": self.envelope,
            "nodes": self.sweep_node_count,
            "residual": self.max_abs_residual,
            "time": self.wall_time,
        }


class ConvergenceRow(BaseModel):
    """One row of a convergence study."""
    N: int = Field(ge=2)
    h: float = Field(gt=0.0)
    error: float = Field(ge=0.0)
    # undefined on the first row
    order: Optional[float] = None
    wall_time: Optional[float] = None


class ConvergenceTable(BaseModel):
    """Rows of a convergence study, coarsest first."""
    scene: str = "scene"
    rows: List[ConvergenceRow] = Field(default_factory=list)

    @property
    def finest(self) -> Optional[ConvergenceRow]:
        return self.rows[-1] if self.rows else None

    def mean_order(self, min_N: int = 0) -> Optional[float]:
        """Average observed order over rows with N >= min_N."""
        orders = [r.order for r in self.rows if r.order is not None and r.N >= min_N]
        if not orders:
            return None
        return math.fsum(orders) / len(orders)


class RunResult(BaseModel):
    """What a CLI run produced: the final field, its mask and the files written."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    scene: str
    solution: ScalarField
    mask: Optional[BooleanField] = None
    reports: List[SolveReport] = Field(default_factory=list)
    files: List[str] = Field(default_factory=list)
    statistics: Dict[str, Any] = Field(default_factory=dict)

    @property
    def max_abs_residual(self) -> float:
        return max((r.max_abs_residual for r in self.reports), default=0.0)

    @property
    def wall_time(self) -> float:
        return sum(r.wall_time for r in self.reports)
