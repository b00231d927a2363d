"""
Sweep Solver Module

This module solves the visibility obstacle problem

    min{u - g, (x - x*) . grad u} = 0

on a uniform grid with the upwind update u(x) = max{g(x), I_h u(x~)}, where
x~ is the foot point of the ray from x toward x* and I_h the multilinear
interpolant. Characteristics are straight rays leaving x*, so a single pass in
the right order reaches the fixpoint. The lower envelope
w(x) = min{g(x), I_h w(x~_out)} runs the same pass backwards, from the box
boundary toward the viewpoint.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from src.models.grid_models import BooleanField, Grid, ScalarField, Viewpoint
from src.models.report_models import SolveReport
from src.models.scene_models import SolverConfig
from src.solvers.base_solver import BaseSolver
from src.tools.grid_tools import interp, viewpoint_index
from src.tools.sweep_kernels import lower_sweep, residual_at, residual_field, upper_sweep
from src.utils.validation_utils import ConfigError, GridIndexError

# Set up logging
logger = logging.getLogger(__name__)


def orthant_keys(grid: Grid, vp: Viewpoint):
    """
    Per-axis side and distance keys of every node relative to the viewpoint cell.

    Along axis k with c_k = ceil(s*_k), nodes i_k >= c_k sit on the upper side
    at distance i_k - c_k, the rest on the lower side at distance c_k - 1 - i_k.

    Returns:
        (sides, deltas): two lists of dim flat arrays.
    """
    s_star = viewpoint_index(grid, vp)
    sides, deltas = [], []
    for k in range(grid.dim):
        c = int(np.ceil(s_star[k]))
        i = np.arange(grid.n[k], dtype=np.int64)
        upper = i >= c
        delta = np.where(upper, i - c, c - 1 - i)
        # broadcast the per-axis keys over the full grid
        bshape = [1] * grid.dim
        bshape[k] = grid.n[k]
        sides.append(np.broadcast_to(upper.reshape(bshape), grid.shape).reshape(-1))
        deltas.append(np.broadcast_to(delta.reshape(bshape), grid.shape).reshape(-1))
    return sides, deltas


def flat_sweep_order(grid: Grid, vp: Viewpoint) -> np.ndarray:
    """
    Flat node offsets in upper-envelope dependency order.

    Nodes are sorted lexicographically by their distance vector from the
    viewpoint cell (axis 0 first), with the orthant as tie-break. Every foot
    point stencil of a node lies componentwise no farther out and strictly
    closer along the ray's dominant axis, so it comes earlier. Orthants are
    interleaved layer by layer because an off-grid viewpoint lets a node's
    stencil straddle two orthants.
    """
    sides, deltas = orthant_keys(grid, vp)
    # np.lexsort treats the last key as primary
    keys = list(reversed(sides)) + list(reversed(deltas))
    return np.lexsort(keys).astype(np.int64)


def sweep_order(grid: Grid, vp: Viewpoint) -> np.ndarray:
    """
    The single-pass visiting order as multi-indices.

    Args:
        grid: The grid.
        vp: The viewpoint.

    Returns:
        Integer array of shape (size, dim), a permutation of all nodes. Within
        each orthant around the viewpoint cell indices move away from the
        viewpoint along every axis.

    Raises:
        ConfigError: If the viewpoint lies outside the box.
    """
    order = flat_sweep_order(grid, vp)
    return np.stack(np.unravel_index(order, grid.shape), axis=-1).astype(np.int64)


def count_orthants(grid: Grid, vp: Viewpoint) -> int:
    """Number of non-empty orthants around the viewpoint cell."""
    s_star = viewpoint_index(grid, vp)
    count = 1
    for k in range(grid.dim):
        c = int(np.ceil(s_star[k]))
        count *= int(c > 0) + int(c < grid.n[k])
    return count


def is_visible(u: ScalarField, alpha: float = 0.0) -> BooleanField:
    """
    Visibility set as the alpha-sublevel set of a solved field.

    Args:
        u: Solved upper envelope.
        alpha: Level; nodes with u <= alpha are visible.

    Returns:
        Boolean mask per node.
    """
    return BooleanField(grid=u.grid, mask=u.values <= alpha, alpha=alpha)


def clamp_at_viewpoint(g: ScalarField, anchor_value: float) -> ScalarField:
    """max{g, g(x*)}: the obstacle with every value below the viewpoint's raised to it."""
    return g.with_values(np.maximum(g.values, anchor_value))


class SweepSolver(BaseSolver):
    """
    Single-pass fast sweeping solver for the upper and lower star-shaped envelopes.
    """

    def __init__(self, grid: Grid, verbose: bool = False):
        super().__init__(grid, name="SweepSolver", verbose=verbose)
        self._shape = np.asarray(grid.n, dtype=np.int64)
        self._strides = grid.strides
        self._h = grid.spacing

    def anchor_value(self, g: ScalarField, cfg: SolverConfig) -> float:
        """g(x*): the configured value, else the interpolated obstacle."""
        if cfg.anchor_value is not None:
            return float(cfg.anchor_value)
        return interp(g, cfg.viewpoint.x_star)

    def solve(self, g: ScalarField, cfg: SolverConfig) -> SolveReport:
        """
        Solve for the chosen envelope in a single pass.

        Args:
            g: Obstacle sampled on this solver's grid.
            cfg: Envelope, viewpoint and optional anchor value.

        Returns:
            SolveReport with the solution, the max residual over all nodes,
            the number of node updates and the sweep wall time.

        Raises:
            ConfigError: If the viewpoint is outside the box or g lives on
                another grid.
        """
        self.check_field(g, label="g")
        cfg.viewpoint.check_inside(self.grid)
        s_star = viewpoint_index(self.grid, cfg.viewpoint)
        g_flat = g.flat
        lower = cfg.envelope == "lower"
        anchor = self.anchor_value(g, cfg)
        g_min = float(g_flat.min())

        u = np.empty_like(g_flat)
        visits = np.zeros(self.grid.size, dtype=np.int64)
        with self.timed(f"{cfg.envelope} sweep") as elapsed:
            order = flat_sweep_order(self.grid, cfg.viewpoint)
            if lower:
                lower_sweep(g_flat, self._shape, self._strides, s_star, self._h,
                            order[::-1].copy(), g_min, u, visits)
            else:
                upper_sweep(g_flat, self._shape, self._strides, s_star, self._h,
                            order, anchor, u, visits)

        res = np.empty_like(u)
        residual_field(u, g_flat, self._shape, self._strides, s_star, self._h,
                       anchor, g_min, lower, res)
        max_res = float(np.abs(res).max())

        report = SolveReport(
            solution=ScalarField(grid=self.grid, values=u),
            max_abs_residual=max_res,
            sweep_node_count=int(visits.sum()),
            max_visits=int(visits.max()),
            wall_time=elapsed[0],
            envelope=cfg.envelope,
            viewpoint=cfg.viewpoint,
            anchor_value=None if lower else anchor,
        )
        self.log_detail(
            f"Solved {cfg.envelope} envelope from {cfg.viewpoint.x_star}: "
            f"{report.sweep_node_count} updates over {count_orthants(self.grid, cfg.viewpoint)} orthant(s), "
            f"residual {max_res:.3e}, {report.wall_time:.4f}s"
        )
        return report

    def residual(
        self,
        u: ScalarField,
        g: ScalarField,
        vp: Viewpoint,
        i: Sequence[int],
        anchor_value: Optional[float] = None,
        envelope: str = "upper",
    ) -> float:
        """
        Scheme residual at node i.

        upper: min{u - g, (u - I_h u(x~)) / |x - x~|}; at nodes whose
        neighbour box holds x*, I_h u(x~) is g(x*) and |x - x~| = |x - x*|;
        at the viewpoint node it is u - g.

        Raises:
            GridIndexError: If i lies outside the grid.
        """
        self.check_field(u, label="u")
        self.check_field(g, label="g")
        if len(i) != self.grid.dim or any(not 0 <= int(a) < n for a, n in zip(i, self.grid.n)):
            raise GridIndexError(f"index {tuple(i)} outside grid of shape {self.grid.shape}")

        s_star = viewpoint_index(self.grid, vp)
        if anchor_value is None:
            anchor_value = interp(g, vp.x_star)
        flat = int(np.ravel_multi_index(tuple(int(a) for a in i), self.grid.shape))
        return float(residual_at(u.flat, g.flat, self._shape, self._strides, s_star, self._h,
                                 float(anchor_value), float(g.flat.min()), envelope == "lower", flat))

    def residual_field(
        self,
        u: ScalarField,
        g: ScalarField,
        vp: Viewpoint,
        anchor_value: Optional[float] = None,
        envelope: str = "upper",
    ) -> ScalarField:
        """Residual at every node."""
        self.check_field(u, label="u")
        self.check_field(g, label="g")
        s_star = viewpoint_index(self.grid, vp)
        if anchor_value is None:
            anchor_value = interp(g, vp.x_star)
        out = np.empty(self.grid.size, dtype=np.float64)
        residual_field(u.flat, g.flat, self._shape, self._strides, s_star, self._h,
                       float(anchor_value), float(g.flat.min()), envelope == "lower", out)
        return ScalarField(grid=self.grid, values=out)


def solve(g: ScalarField, cfg: SolverConfig) -> SolveReport:
    """Solve on g's grid; see SweepSolver.solve."""
    return SweepSolver(g.grid).solve(g, cfg)


def residual(
    u: ScalarField,
    g: ScalarField,
    vp: Viewpoint,
    i: Sequence[int],
    anchor_value: Optional[float] = None,
    envelope: str = "upper",
) -> float:
    """Scheme residual at node i; see SweepSolver.residual."""
    if not u.same_grid(g):
        raise ConfigError("u and g live on different grids", field="u")
    return SweepSolver(u.grid).residual(u, g, vp, i, anchor_value=anchor_value, envelope=envelope)


def warm_up() -> None:
    """Compile the sweep kernels on a tiny problem so later timings exclude compilation."""
    grid = Grid.square(3, dim=2)
    g = ScalarField.constant(grid, 0.0)
    vp = Viewpoint(x_star=[0.0, 0.0])
    solver = SweepSolver(grid)
    solver.solve(g, SolverConfig(viewpoint=vp))
    solver.solve(g, SolverConfig(viewpoint=vp, envelope="lower"))
    logger.debug("Sweep kernels compiled")
