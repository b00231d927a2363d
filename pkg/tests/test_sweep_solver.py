import math
import time

import numpy as np
import pytest

from conftest import random_obstacle, random_viewpoint, scene_cases
from src.models.grid_models import Grid, ScalarField, Viewpoint
from src.models.obstacle_models import ConeSpec, ConstantSpec
from src.models.scene_models import RaySamplingConfig, SolverConfig
from src.solvers.ray_oracle import oracle_field
from src.solvers.sweep_solver import (
    SweepSolver,
    count_orthants,
    is_visible,
    orthant_keys,
    residual,
    solve,
    sweep_order,
)
from src.tools.grid_tools import interp, ray_foot
from src.tools.obstacle_tools import sample_obstacle
from src.tools.scene_library import cone_scene, four_obstacles_scene, two_buildings_scene
from src.utils.data_utils import sup_error
from src.utils.validation_utils import ConfigError, GridIndexError


def random_scene(dim: int, seed: int):
    rng = np.random.default_rng(seed)
    grid = Grid.square(37 if dim == 2 else 13, dim=dim)
    spec = random_obstacle(rng, dim)
    vp = random_viewpoint(rng, dim, on_grid=bool(seed % 3 == 0), grid=grid)
    return grid, sample_obstacle(spec, grid), vp


def tolerance(g: ScalarField) -> float:
    return 1e-12 * (1.0 + float(np.abs(g.values).max()))


class TestSolve:
    @pytest.mark.parametrize("envelope", ["upper", "lower"])
    def test_constant_obstacle(self, envelope):
        grid = Grid.square(15, dim=2)
        g = ScalarField.constant(grid, 0.3)
        report = solve(g, SolverConfig(envelope=envelope, viewpoint=Viewpoint(x_star=[0.11, -0.52])))
        assert np.all(report.solution.values == 0.3)
        assert report.max_abs_residual == 0.0
        assert report.sweep_node_count == grid.size
        assert report.single_visit

    @pytest.mark.parametrize("dim, seed", scene_cases(100, 20))
    def test_exact_fixpoint_single_visit(self, dim, seed):
        grid, g, vp = random_scene(dim, seed)
        report = solve(g, SolverConfig(viewpoint=vp))
        assert report.max_abs_residual <= tolerance(g)
        assert report.single_visit
        assert report.max_visits == 1

    @pytest.mark.parametrize("dim, seed", scene_cases(200, 6))
    def test_lower_envelope_fixpoint(self, dim, seed):
        grid, g, vp = random_scene(dim, seed)
        report = solve(g, SolverConfig(envelope="lower", viewpoint=vp))
        assert report.max_abs_residual <= tolerance(g)
        assert report.single_visit
        assert np.all(report.solution.values <= g.values)

    @pytest.mark.parametrize("dim, seed", scene_cases(300, 8))
    def test_obstacle_and_stability_bounds(self, dim, seed):
        _, g, vp = random_scene(dim, seed)
        report = solve(g, SolverConfig(viewpoint=vp))
        u = report.solution.values
        assert np.all(u >= g.values)
        assert np.all(u >= report.anchor_value)
        assert np.all(u <= np.abs(g.values).max())

    @pytest.mark.parametrize("dim, seed", scene_cases(400, 6))
    def test_comparison(self, dim, seed):
        grid, g1, vp = random_scene(dim, seed)
        bump = np.random.default_rng(seed).uniform(0.0, 0.2, size=grid.shape)
        g2 = g1.with_values(g1.values + bump)
        u1 = solve(g1, SolverConfig(viewpoint=vp)).solution.values
        u2 = solve(g2, SolverConfig(viewpoint=vp)).solution.values
        assert np.all(u1 <= u2)

    @pytest.mark.parametrize("dim, seed", scene_cases(500, 6))
    def test_idempotent(self, dim, seed):
        _, g, vp = random_scene(dim, seed)
        first = solve(g, SolverConfig(viewpoint=vp))
        second = solve(first.solution, SolverConfig(viewpoint=vp, anchor_value=first.anchor_value))
        assert np.array_equal(first.solution.values, second.solution.values)

    def test_nondecreasing_toward_foot_point(self):
        grid, g, vp = random_scene(2, 42)
        u = solve(g, SolverConfig(viewpoint=vp)).solution
        for idx in [(0, 0), (36, 0), (0, 36), (36, 36), (18, 5), (3, 30)]:
            x = grid.lo_array + np.asarray(idx) * grid.spacing
            foot = ray_foot(grid, x, vp)
            if np.array_equal(foot, vp.point):
                continue
            assert u.at(idx) >= interp(u, foot) - 1e-12

    def test_viewpoint_outside_box(self):
        g = ScalarField.constant(Grid.square(5, dim=2), 0.0)
        with pytest.raises(ConfigError):
            solve(g, SolverConfig(viewpoint=Viewpoint(x_star=[1.5, 0.0])))

    def test_grid_mismatch(self):
        g = ScalarField.constant(Grid.square(5, dim=2), 0.0)
        with pytest.raises(ConfigError):
            SweepSolver(Grid.square(6, dim=2)).solve(g, SolverConfig(viewpoint=Viewpoint(x_star=[0.0, 0.0])))


class TestClosedForm1D:
    @staticmethod
    def setup_line(N: int = 401):
        grid = Grid(lo=[-3.0], hi=[1.0], n=[N])
        g = sample_obstacle(ConeSpec(center=[-1.0], slope=-1.0), grid)
        return grid, g, grid.axis_coordinates(0), Viewpoint(x_star=[0.0])

    def test_upper(self):
        grid, g, x, vp = self.setup_line()
        u = solve(g, SolverConfig(viewpoint=vp)).solution.values
        exact = np.where(x < -2.0, -x - 1.0, np.where(x <= 0.0, 1.0, x + 1.0))
        assert np.max(np.abs(u - exact)) <= 2.0 * grid.spacing[0]

    def test_lower(self):
        grid, g, x, vp = self.setup_line()
        w = solve(g, SolverConfig(envelope="lower", viewpoint=vp)).solution.values
        exact = np.where(x < -1.0, -x - 1.0, np.where(x <= 0.0, 0.0, x + 1.0))
        assert np.max(np.abs(w - exact)) <= 2.0 * grid.spacing[0]

    def test_off_grid_viewpoint(self):
        grid, g, x, _ = self.setup_line(N=200)
        vp = Viewpoint(x_star=[0.0])
        u = solve(g, SolverConfig(viewpoint=vp)).solution.values
        exact = np.where(x < -2.0, -x - 1.0, np.where(x <= 0.0, 1.0, x + 1.0))
        assert np.max(np.abs(u - exact)) <= 2.0 * grid.spacing[0]


class TestResidual:
    def test_constant_fields(self):
        grid = Grid.square(7, dim=2)
        g = ScalarField.constant(grid, -1.25)
        vp = Viewpoint(x_star=[0.2, 0.2])
        for i in [(0, 0), (3, 3), (6, 1)]:
            assert residual(g, g, vp, i) == 0.0

    def test_perturbation_sign(self):
        grid, g, vp = random_scene(2, 7)
        report = solve(g, SolverConfig(viewpoint=vp))
        u = report.solution
        solver = SweepSolver(grid)
        far = (0, 0) if np.linalg.norm(vp.point - grid.lo_array) > 0.5 else (36, 36)
        bumped = u.values.copy()
        bumped[far] += 1e-3
        value = solver.residual(u.with_values(bumped), g, vp, far, anchor_value=report.anchor_value)
        assert value > 0.0

    def test_residual_field_matches_report(self):
        grid, g, vp = random_scene(3, 11)
        report = solve(g, SolverConfig(viewpoint=vp))
        field = SweepSolver(grid).residual_field(report.solution, g, vp, anchor_value=report.anchor_value)
        assert float(np.abs(field.values).max()) == report.max_abs_residual

    def test_index_out_of_range(self):
        grid = Grid.square(5, dim=2)
        g = ScalarField.constant(grid, 0.0)
        with pytest.raises(GridIndexError):
            residual(g, g, Viewpoint(x_star=[0.0, 0.0]), (5, 0))


class TestSweepOrder:
    @pytest.mark.parametrize("dim, seed", scene_cases(600, 6))
    def test_permutation(self, dim, seed):
        rng = np.random.default_rng(seed)
        grid = Grid(lo=[-1.0] * dim, hi=[1.0] * dim, n=rng.integers(2, 12, size=dim).tolist())
        vp = random_viewpoint(rng, dim)
        order = sweep_order(grid, vp)
        assert order.shape == (grid.size, dim)
        flat = np.ravel_multi_index(tuple(order.T), grid.shape)
        assert np.array_equal(np.sort(flat), np.arange(grid.size))

    @pytest.mark.parametrize("dim", [2, 3])
    def test_moves_away_within_orthant(self, dim):
        grid = Grid.square(9, dim=dim)
        vp = Viewpoint(x_star=[0.1, -0.35, 0.6][:dim])
        order = sweep_order(grid, vp)
        position = np.empty(grid.size, dtype=np.int64)
        position[np.ravel_multi_index(tuple(order.T), grid.shape)] = np.arange(grid.size)
        position = position.reshape(grid.shape)
        sides, _ = orthant_keys(grid, vp)
        for k in range(dim):
            side = sides[k].reshape(grid.shape)
            lo = [slice(None)] * dim
            hi = [slice(None)] * dim
            lo[k] = slice(0, -1)
            hi[k] = slice(1, None)
            a, b = position[tuple(lo)], position[tuple(hi)]
            upper = side[tuple(lo)] & side[tuple(hi)]
            lower = ~side[tuple(lo)] & ~side[tuple(hi)]
            assert np.all(b[upper] > a[upper])
            assert np.all(a[lower] > b[lower])

    def test_corner_viewpoint_single_orthant(self):
        grid = Grid.square(11, dim=2)
        assert count_orthants(grid, Viewpoint(x_star=[-1.0, -1.0])) == 1
        order = sweep_order(grid, Viewpoint(x_star=[-1.0, -1.0]))
        assert order[0].tolist() == [0, 0]

    def test_center_four_orthants(self):
        grid = Grid.square(11, dim=2)
        assert count_orthants(grid, Viewpoint(x_star=[0.0, 0.0])) == 4
        assert count_orthants(Grid.square(11, dim=3), Viewpoint(x_star=[0.05, 0.05, 0.05])) == 8


class TestVisibility:
    def test_constant(self):
        u = ScalarField.constant(Grid.square(4, dim=2), 0.5)
        assert is_visible(u, 0.5).count == 16
        assert is_visible(u, 0.4).count == 0

    def test_sublevel_nesting(self, rng):
        _, g, vp = random_scene(2, 3)
        u = solve(g, SolverConfig(viewpoint=vp)).solution
        levels = np.sort(rng.uniform(-1.0, 1.0, size=5))
        masks = [is_visible(u, a).mask for a in levels]
        for smaller, larger in zip(masks, masks[1:]):
            assert np.all(larger[smaller])

    def test_four_obstacles_shadows(self):
        scene = four_obstacles_scene(N=101)
        g = sample_obstacle(scene.obstacle, scene.grid)
        vp = scene.viewpoints[0]
        u = solve(g, SolverConfig(viewpoint=vp)).solution
        visible = is_visible(u, scene.alpha)
        obstacles = g.values > scene.alpha
        # everything inside an obstacle is hidden, and obstacles cast shadows beyond themselves
        assert not np.any(visible.mask & obstacles)
        assert np.count_nonzero(~visible.mask & ~obstacles) > 0


class TestOracleConvergence:
    @staticmethod
    def cone_error(N: int, step: float) -> float:
        scene = cone_scene(N)
        g = sample_obstacle(scene.obstacle, scene.grid)
        u = solve(g, SolverConfig(viewpoint=scene.viewpoints[0])).solution
        reference = oracle_field(scene.obstacle, scene.viewpoints[0], scene.grid, RaySamplingConfig(step=step))
        return sup_error(u, reference)

    def test_first_order_on_cone(self):
        # h / 8 at N = 256 on [-2, 2]^2
        step = (4.0 / 255.0) / 8.0
        coarse, fine = self.cone_error(32, step), self.cone_error(64, step)
        assert 1.6 <= coarse / fine <= 2.4

    @pytest.mark.slow
    def test_reference_table(self):
        reference = {32: 9.12e-02, 64: 4.49e-02, 128: 2.23e-02, 256: 1.11e-02, 512: 5.54e-03}
        # h / 16 at N = 512 on [-2, 2]^2
        step = (4.0 / 511.0) / 16.0
        errors = {N: self.cone_error(N, step) for N in reference}
        for N, expected in reference.items():
            assert errors[N] == pytest.approx(expected, rel=0.2)
        for coarse, fine in [(64, 128), (128, 256), (256, 512)]:
            order = math.log(errors[coarse] / errors[fine]) / math.log((fine - 1) / (coarse - 1))
            assert 0.9 <= order <= 1.1


@pytest.mark.slow
def test_sweep_speed_at_512():
    scene = cone_scene(512)
    g = sample_obstacle(scene.obstacle, scene.grid)
    solver = SweepSolver(scene.grid)
    solver.solve(g, SolverConfig(viewpoint=scene.viewpoints[0]))  # compile
    report = solver.solve(g, SolverConfig(viewpoint=scene.viewpoints[0]))
    assert report.wall_time < 1.0


@pytest.mark.slow
def test_two_buildings_64_cubed():
    scene = two_buildings_scene(64)
    g = sample_obstacle(scene.obstacle, scene.grid)
    solve(ScalarField.constant(Grid.square(3, dim=3), 0.0),
          SolverConfig(viewpoint=Viewpoint(x_star=[0.0, 0.0, 0.0])))
    start = time.perf_counter()
    report = solve(g, SolverConfig(viewpoint=scene.viewpoints[0]))
    assert time.perf_counter() - start < 5.0
    assert report.max_abs_residual <= tolerance(g)
    assert report.single_visit


def test_constant_spec_through_solver():
    grid = Grid.square(9, dim=3)
    g = sample_obstacle(ConstantSpec(value=2.0), grid)
    report = solve(g, SolverConfig(viewpoint=Viewpoint(x_star=[0.3, 0.3, -0.9])))
    assert np.all(report.solution.values == 2.0)
