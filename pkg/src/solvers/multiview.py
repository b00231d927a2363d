"""
Multiview Module

This module combines per-viewpoint solutions. Visibility from any viewpoint
is the nodewise minimum of the single-viewpoint envelopes, visibility from
every viewpoint the nodewise maximum, and other rules (seen by at least k,
x*_1 or both x*_2 and x*_3, ...) are min/max trees over the same fields.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from src.models.grid_models import Grid, ScalarField, ViewpointSet
from src.models.report_models import SolveReport
from src.models.scene_models import (
    ComposeExpr,
    KthSmallestExpr,
    LeafExpr,
    MaxExpr,
    MinExpr,
    SolverConfig,
)
from src.solvers.base_solver import BaseSolver
from src.solvers.sweep_solver import SweepSolver
from src.utils.validation_utils import ConfigError

# Set up logging
logger = logging.getLogger(__name__)


def at_least(k: int, count: int) -> KthSmallestExpr:
    """Tree for "seen by at least k of the first `count` viewpoints"."""
    if not 1 <= k <= count:
        raise ConfigError(f"k={k} must lie in 1..{count}", field="compose.k")
    return KthSmallestExpr(k=k, children=[LeafExpr(index=i) for i in range(count)])


def _evaluate(expr: ComposeExpr, values: List[np.ndarray]) -> np.ndarray:
    if isinstance(expr, LeafExpr):
        return values[expr.index]
    children = [_evaluate(child, values) for child in expr.children]
    if isinstance(expr, MinExpr):
        return np.minimum.reduce(children)
    if isinstance(expr, MaxExpr):
        return np.maximum.reduce(children)
    # k-th smallest per node
    stacked = np.stack(children, axis=0)
    return np.partition(stacked, expr.k - 1, axis=0)[expr.k - 1]


def compose(fields: Sequence[ScalarField], expr: ComposeExpr) -> ScalarField:
    """
    Evaluate a min/max tree over fields nodewise.

    Args:
        fields: Per-viewpoint solutions on a common grid.
        expr: Tree whose leaves index into fields.

    Returns:
        The composed field.

    Raises:
        ConfigError: On an empty field list, a grid mismatch or a leaf
            index without a field.
    """
    if not fields:
        raise ConfigError("at least one field is required", field="fields")
    grid = fields[0].grid
    for k, field in enumerate(fields):
        if field.grid != grid:
            raise ConfigError(f"lives on grid {field.grid.shape}, expected {grid.shape}", field=f"fields.{k}")
    if expr.max_index() >= len(fields):
        raise ConfigError(f"leaf {expr.max_index()} has no field ({len(fields)} given)", field="compose")
    values = [f.values for f in fields]
    return ScalarField(grid=grid, values=np.array(_evaluate(expr, values), dtype=np.float64))


class MultiviewSolver(BaseSolver):
    """
    Runs one sweep per viewpoint, concurrently, and composes the results.
    """

    def __init__(self, grid: Grid, max_workers: int = 1, verbose: bool = False):
        super().__init__(grid, name="MultiviewSolver", verbose=verbose)
        self.max_workers = max(1, max_workers)
        self.sweep = SweepSolver(grid, verbose=verbose)

    def solve_each(
        self,
        g: ScalarField,
        vps: ViewpointSet,
        anchor_values: Optional[Sequence[float]] = None,
    ) -> List[SolveReport]:
        """
        Upper-envelope solve for every viewpoint.

        Raises:
            ConfigError: On an empty set, a viewpoint outside the box or a
                wrong number of anchor values.
        """
        self.check_field(g, label="g")
        vps.check_inside(self.grid)
        if anchor_values is not None and len(anchor_values) != len(vps):
            raise ConfigError(f"expected {len(vps)} anchor values, got {len(anchor_values)}",
                              field="anchor_values")
        configs = [
            SolverConfig(viewpoint=vp, anchor_value=None if anchor_values is None else anchor_values[i])
            for i, vp in enumerate(vps.viewpoints)
        ]

        with self.timed(f"{len(configs)} viewpoint solves"):
            if self.max_workers > 1 and len(configs) > 1:
                # the sweep kernels release the GIL
                with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                    reports = list(pool.map(lambda cfg: self.sweep.solve(g, cfg), configs))
            else:
                reports = [self.sweep.solve(g, cfg) for cfg in configs]
        return reports

    def solve_any(self, g: ScalarField, vps: ViewpointSet,
                  anchor_values: Optional[Sequence[float]] = None) -> ScalarField:
        """Visible from at least one viewpoint: nodewise min of the solutions."""
        fields = [r.solution for r in self.solve_each(g, vps, anchor_values)]
        return compose(fields, MinExpr(children=[LeafExpr(index=i) for i in range(len(fields))]))

    def solve_all(self, g: ScalarField, vps: ViewpointSet,
                  anchor_values: Optional[Sequence[float]] = None) -> ScalarField:
        """Visible from every viewpoint: nodewise max of the solutions."""
        fields = [r.solution for r in self.solve_each(g, vps, anchor_values)]
        return compose(fields, MaxExpr(children=[LeafExpr(index=i) for i in range(len(fields))]))


def solve_any(g: ScalarField, vps: ViewpointSet, max_workers: int = 1) -> ScalarField:
    """Nodewise min over per-viewpoint solves."""
    return MultiviewSolver(g.grid, max_workers=max_workers).solve_any(g, vps)


def solve_all(g: ScalarField, vps: ViewpointSet, max_workers: int = 1) -> ScalarField:
    """Nodewise max over per-viewpoint solves."""
    return MultiviewSolver(g.grid, max_workers=max_workers).solve_all(g, vps)
