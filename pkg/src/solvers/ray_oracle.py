"""
Ray Oracle Module

This module evaluates the star-shaped envelopes directly from their ray
formulas, the classic ray-tracing way:

    upper(x) = max{ g(x* + t (x - x*)) : t in [0, 1] }
    lower(x) = min{ g(x + t (x - x*)) : t >= 0, inside the box }

The max/min over t is taken over samples spaced `step` apart in arc length,
both segment endpoints included exactly. It is the reference the sweep solver
is tested and benchmarked against.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from src.models.grid_models import Grid, ScalarField, Viewpoint, ViewpointSet
from src.models.obstacle_models import ObstacleSpec
from src.models.scene_models import RaySamplingConfig
from src.solvers.base_solver import BaseSolver
from src.tools.obstacle_tools import eval_points
from src.utils.validation_utils import ConfigError, DomainError

# Set up logging
logger = logging.getLogger(__name__)

# Upper bound on samples for the whole-box minimum at x = x*
BOX_SCAN_POINTS = 4_000_000


def _exit_length(x: np.ndarray, direction: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """
    Arc length from each x along its unit direction to the box boundary (slab test).

    Args:
        x: Points of shape (m, dim) inside the box.
        direction: Unit directions of shape (m, dim).

    Returns:
        Non-negative lengths of shape (m,).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        to_hi = np.where(direction > 0, (hi - x) / direction, np.inf)
        to_lo = np.where(direction < 0, (lo - x) / direction, np.inf)
    return np.maximum(np.minimum(to_hi, to_lo).min(axis=1), 0.0)


def _box_minimum(spec: ObstacleSpec, grid: Grid, step: float, batch_points: int) -> float:
    """min of g over the box, scanned on a lattice no coarser than step where affordable."""
    extent = grid.hi_array - grid.lo_array
    counts = np.ceil(extent / step).astype(np.int64) + 1
    while int(np.prod(counts)) > BOX_SCAN_POINTS:
        counts = np.maximum((counts + 1) // 2, 2)
    axes = [np.linspace(grid.lo[k], grid.hi[k], int(counts[k])) for k in range(grid.dim)]
    points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.dim)

    best = np.inf
    for start in range(0, points.shape[0], batch_points):
        best = min(best, float(eval_points(spec, points[start:start + batch_points], grid).min()))
    logger.debug(f"Box minimum scanned on a {tuple(int(c) for c in counts)} lattice: {best:.6g}")
    return best


class RayOracle(BaseSolver):
    """
    Brute-force envelope evaluator over sampled rays.

    Nodes are processed in batches whose sample count stays under
    cfg.batch_points; batches run on cfg.workers threads.
    """

    def __init__(self, spec: ObstacleSpec, grid: Grid, cfg: RaySamplingConfig, verbose: bool = False):
        super().__init__(grid, name="RayOracle", verbose=verbose)
        self.spec = spec
        self.cfg = cfg

    def _check_points(self, x: np.ndarray) -> None:
        lo, hi = self.grid.lo_array, self.grid.hi_array
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"points outside the box {self.grid.lo}..{self.grid.hi}")

    def _upper_batch(self, x: np.ndarray, vp: np.ndarray) -> np.ndarray:
        diff = x - vp
        length = np.sqrt(np.sum(diff * diff, axis=-1))
        k_max = int(np.ceil(length.max() / self.cfg.step)) if length.size else 0
        k = np.arange(k_max + 1, dtype=np.float64)
        safe = np.where(length > 0.0, length, 1.0)
        t = np.where(length[:, None] > 0.0, np.minimum(k[None, :] * self.cfg.step / safe[:, None], 1.0), 0.0)
        samples = vp + t[..., None] * diff[:, None, :]
        # the far endpoint is x itself, not x* + 1 * (x - x*)
        samples = np.where((t == 1.0)[..., None], x[:, None, :], samples)
        return eval_points(self.spec, samples, self.grid).max(axis=1)

    def _lower_batch(self, x: np.ndarray, vp: np.ndarray) -> np.ndarray:
        diff = x - vp
        length = np.sqrt(np.sum(diff * diff, axis=-1))
        safe = np.where(length > 0.0, length, 1.0)
        direction = diff / safe[:, None]
        exit_len = np.where(length > 0.0, _exit_length(x, direction, self.grid.lo_array, self.grid.hi_array), 0.0)
        k_max = int(np.ceil(exit_len.max() / self.cfg.step)) if exit_len.size else 0
        s = np.minimum(np.arange(k_max + 1, dtype=np.float64)[None, :] * self.cfg.step, exit_len[:, None])
        samples = x[:, None, :] + s[..., None] * direction[:, None, :]
        samples = np.clip(samples, self.grid.lo_array, self.grid.hi_array)
        samples[:, 0, :] = x
        return eval_points(self.spec, samples, self.grid).min(axis=1)

    def _batches(self, lengths: np.ndarray) -> List[np.ndarray]:
        """Index groups sorted by ray length, each within the sample budget."""
        order = np.argsort(lengths, kind="stable")
        per_ray = np.ceil(lengths[order] / self.cfg.step) + 1.0
        budget = self.cfg.batch_points
        groups, start = [], 0
        while start < order.size:
            window = min(order.size - start, int(budget // per_ray[start]) + 1)
            # cost of taking the first j rays is per_ray[j - 1] * j, nondecreasing in j
            cost = per_ray[start:start + window] * np.arange(1, window + 1)
            count = max(1, int(np.searchsorted(cost, budget, side="right")))
            groups.append(order[start:start + count])
            start += count
        return groups

    def envelope(self, x: np.ndarray, vp: Viewpoint, which: str = "upper") -> np.ndarray:
        """
        Envelope values at many points.

        Args:
            x: Points of shape (m, dim) inside the box.
            vp: The viewpoint.
            which: "upper" or "lower".

        Returns:
            Array of shape (m,).
        """
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.grid.dim)
        self._check_points(x)
        vp.check_inside(self.grid)
        star = vp.point
        diff = x - star
        lengths = np.sqrt(np.sum(diff * diff, axis=-1))
        if which == "lower":
            safe = np.where(lengths > 0.0, lengths, 1.0)
            exits = _exit_length(x, diff / safe[:, None], self.grid.lo_array, self.grid.hi_array)
            lengths = np.where(lengths > 0.0, exits, 0.0)
            batch_fn = self._lower_batch
        elif which == "upper":
            batch_fn = self._upper_batch
        else:
            raise ConfigError(f"unknown envelope '{which}'", field="envelope")

        groups = self._batches(lengths)
        self.log_detail(f"{which} envelope at {x.shape[0]} points in {len(groups)} batch(es), step {self.cfg.step:.4g}")
        out = np.empty(x.shape[0], dtype=np.float64)
        if self.cfg.workers > 1 and len(groups) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                results = list(pool.map(lambda idx: batch_fn(x[idx], star), groups))
        else:
            results = [batch_fn(x[idx], star) for idx in groups]
        for idx, values in zip(groups, results):
            out[idx] = values

        if which == "lower":
            at_star = np.all(x == star, axis=1)
            if np.any(at_star):
                box_min = _box_minimum(self.spec, self.grid, self.cfg.step, self.cfg.batch_points)
                # every other sampled ray also bounds the box minimum from above
                others = out[~at_star]
                if others.size:
                    box_min = min(box_min, float(others.min()))
                out[at_star] = box_min
        return out

    def field(self, vp: Viewpoint, which: str = "upper") -> ScalarField:
        """
        The chosen envelope at every grid node.

        Raises:
            ConfigError: If the sampling step is coarser than the grid spacing.
        """
        h_min = float(self.grid.spacing.min())
        if self.cfg.step > h_min * (1.0 + 1e-12):
            raise ConfigError(f"step {self.cfg.step:.6g} exceeds the grid spacing {h_min:.6g}",
                              field="oracle_step")
        with self.timed(f"{which} oracle field"):
            nodes = self.grid.node_coordinates().reshape(-1, self.grid.dim)
            values = self.envelope(nodes, vp, which)
        return ScalarField(grid=self.grid, values=values.reshape(self.grid.shape))


def _point(x: Sequence[float], dim: int) -> np.ndarray:
    p = np.asarray(x, dtype=np.float64)
    if p.shape != (dim,):
        raise DomainError(f"point {p.tolist()} is not {dim}D")
    return p


def _bounding_grid(vp: Viewpoint, x: np.ndarray) -> Grid:
    """Smallest box holding x* and x, inflated where degenerate."""
    a = np.minimum(vp.point, x)
    b = np.maximum(vp.point, x)
    b = np.where(b > a, b, a + 1.0)
    return Grid(lo=a.tolist(), hi=b.tolist(), n=[2] * a.size)


def upper_envelope_at(spec: ObstacleSpec, vp: Viewpoint, x: Sequence[float],
                      cfg: RaySamplingConfig, grid: Optional[Grid] = None) -> float:
    """
    max of g over the segment from x* to x.

    Args:
        spec: Obstacle.
        vp: Viewpoint.
        x: Query point.
        cfg: Sampling step.
        grid: Box the point lives in; only needed for grid-dependent
            obstacle defaults.

    Returns:
        The sampled maximum; g(x*) when x = x*.
    """
    p = _point(x, len(vp.x_star))
    box = grid if grid is not None else _bounding_grid(vp, p)
    return float(RayOracle(spec, box, cfg).envelope(p[None, :], vp, "upper")[0])


def lower_envelope_at(spec: ObstacleSpec, vp: Viewpoint, x: Sequence[float],
                      box: Grid, cfg: RaySamplingConfig) -> float:
    """
    min of g from x outward along x - x* until the ray leaves the box.

    At x = x* this is the minimum of g over the whole box.
    """
    p = _point(x, box.dim)
    return float(RayOracle(spec, box, cfg).envelope(p[None, :], vp, "lower")[0])


def oracle_field(spec: ObstacleSpec, vp: Viewpoint, grid: Grid,
                 cfg: RaySamplingConfig, which: str = "upper") -> ScalarField:
    """The chosen envelope at every node of grid."""
    return RayOracle(spec, grid, cfg).field(vp, which)


def multiview_oracle_field(spec: ObstacleSpec, vps: ViewpointSet, grid: Grid,
                           cfg: RaySamplingConfig, semantics: str = "any") -> ScalarField:
    """
    Nodewise min ("any") or max ("all") of the per-viewpoint upper envelopes.

    Raises:
        ConfigError: On an empty viewpoint set or unknown semantics.
    """
    vps.check_inside(grid)
    if semantics not in ("any", "all"):
        raise ConfigError(f"unknown semantics '{semantics}'", field="semantics")
    oracle = RayOracle(spec, grid, cfg)
    fields = [oracle.field(vp, "upper").values for vp in vps.viewpoints]
    reduce = np.minimum.reduce if semantics == "any" else np.maximum.reduce
    return ScalarField(grid=grid, values=reduce(fields))
