import math

import numpy as np
import pytest

from src.models.grid_models import BooleanField, Grid, ScalarField, Viewpoint
from src.models.obstacle_models import AnalyticSpec, ConeSpec
from src.models.report_models import ConvergenceRow, ConvergenceTable
from src.models.scene_models import SceneConfig, SolverConfig
from src.pipeline.visibility_pipeline import VisibilityPipeline
from src.solvers.sweep_solver import solve
from src.tools.scene_library import (
    cone_scene,
    four_obstacles_scene,
    parse_scene,
    regularity_1d_scene,
    two_points_scene,
    wall_scene,
)
from src.utils.data_utils import convergence_orders, count_components, mask_statistics, sup_error
from src.utils.formatting_utils import (
    fill_report_template,
    format_convergence_rows,
    format_solve_summary,
    generate_convergence_table,
)
from src.utils.validation_utils import ConfigError, FieldIOError

OFF_GRID_CONE = """
name: off_grid
grid: {lo: [-1.0, -1.0], hi: [1.0, 1.0], n: [10, 10]}
obstacle: {kind: cone, center: [0.0, 0.0]}
viewpoints:
  - [0.05, 0.05]
"""


def gaussian(center, widths) -> AnalyticSpec:
    c, w = np.asarray(center), np.asarray(widths)
    return AnalyticSpec(func=lambda p: np.exp(-np.sum(((p - c) / w) ** 2, axis=1)), label="gaussian")


def scene_on_box(name: str, obstacle, x_star) -> SceneConfig:
    """Single-viewpoint scene on [-2, 2]^2."""
    return SceneConfig(name=name, grid=Grid.square(41, dim=2, lo=-2.0, hi=2.0), obstacle=obstacle,
                       viewpoints=[Viewpoint(x_star=x_star)])


# scenes whose shadow edges are either smooth or run along grid lines or diagonals
FIRST_ORDER_SCENES = {
    "cone": cone_scene(41),
    "cone_along_axis": scene_on_box("cone_along_axis", ConeSpec(center=[0.0, 0.0]), [-1.5, 0.0]),
    "bump": scene_on_box("bump", gaussian([0.3, 0.2], [0.6, 0.6]), [-1.5, -1.2]),
    "wide_bump": scene_on_box("wide_bump", gaussian([-0.4, 0.5], [0.8, 0.8]), [1.3, -1.1]),
    "elongated_bump": scene_on_box("elongated_bump", gaussian([0.5, -0.3], [0.5, 1.0]), [-1.0, 1.4]),
}


def within_band(values, band: float = 0.3) -> bool:
    mean = sum(values) / len(values)
    return all((1.0 - band) * mean <= v <= (1.0 + band) * mean for v in values)


@pytest.fixture
def pipeline(tmp_path):
    return VisibilityPipeline(output_dir=str(tmp_path))


class TestScenes:
    def test_load_by_name_and_path(self, pipeline, tmp_path):
        assert pipeline.load("cone").name == "cone"
        path = tmp_path / "s.yaml"
        path.write_text(OFF_GRID_CONE)
        assert pipeline.load(str(path)).name == "off_grid"
        with pytest.raises(FieldIOError):
            pipeline.load(str(tmp_path / "missing.yaml"))

    def test_with_resolution(self, pipeline):
        scene = cone_scene(N=32)
        assert pipeline.with_resolution(scene, 9).grid.n == [9, 9]
        assert pipeline.with_resolution(scene, 9).grid.lo == scene.grid.lo
        assert pipeline.with_resolution(scene, None) is scene

    def test_anchor_uses_exact_obstacle(self, pipeline):
        scene = parse_scene(OFF_GRID_CONE)
        assert pipeline.anchor_values(scene) == [pytest.approx(-math.sqrt(0.005))]

    def test_clamp_needs_single_viewpoint(self, pipeline):
        scene = wall_scene(N=11).model_copy(update={"clamp_at_viewpoint": True})
        with pytest.raises(ConfigError):
            pipeline.obstacle_field(scene)

    def test_clamped_obstacle(self, pipeline):
        g = pipeline.obstacle_field(two_points_scene(N=21, clamp=True))
        assert g.values.min() == pytest.approx(0.3)

    def test_cone_box_matches_reference_spacing(self, pipeline):
        for row in pipeline.constants["TABLE_1"]:
            scene = cone_scene(row["N"])
            assert scene.grid.lo == [-2.0, -2.0]
            assert float(scene.grid.spacing.max()) == pytest.approx(row["h"], rel=0.01)

    def test_sampling_config(self, pipeline):
        scene = regularity_1d_scene(N=41)
        assert pipeline.sampling_config(scene).step == pytest.approx(float(scene.grid.spacing[0]) / 8)
        stepped = scene.model_copy(update={"oracle_step": 0.01})
        assert pipeline.sampling_config(stepped).step == 0.01
        assert pipeline.sampling_config(stepped, 0.002).step == 0.002
        for bad in (0.0, -0.1):
            with pytest.raises(ConfigError) as info:
                pipeline.sampling_config(stepped, bad)
            assert info.value.field == "step"


class TestSolveScene:
    def test_lower_envelope_jump_and_clamp(self, pipeline):
        vp_node = (25, 65)
        plain = two_points_scene(N=101).model_copy(update={"envelope": "lower"})
        clamped = two_points_scene(N=101, clamp=True).model_copy(update={"envelope": "lower"})
        g, w, _ = pipeline.solve_scene(plain)
        assert g.at(vp_node) == pytest.approx(0.3)
        assert w.at(vp_node) == pytest.approx(0.0, abs=1e-12)
        _, w_clamped, _ = pipeline.solve_scene(clamped)
        assert w_clamped.at(vp_node) == pytest.approx(0.3)
        assert np.all(w_clamped.values >= 0.3 - 1e-12)

    def test_semantics(self, pipeline):
        scene = wall_scene(N=41)
        _, u_all, reports = pipeline.solve_scene(scene)
        singles = [r.solution.values for r in reports]
        assert np.array_equal(u_all.values, np.maximum(*singles))
        _, u_any, _ = pipeline.solve_scene(scene.model_copy(update={"semantics": "any"}))
        assert np.array_equal(u_any.values, np.minimum(*singles))

    def test_sweep_matches_oracle_1d(self, pipeline):
        scene = regularity_1d_scene(N=201)
        _, u, _ = pipeline.solve_scene(scene)
        reference = pipeline.oracle_scene(scene)
        assert sup_error(u, reference) <= 2.0 * float(scene.grid.spacing[0])

    @pytest.mark.parametrize("factory", [
        lambda N: two_points_scene(N),
        lambda N: two_points_scene(N, clamp=True),
        lambda N: regularity_1d_scene(N),
    ])
    def test_oracle_error_constant_is_stable(self, pipeline, factory):
        ratios = []
        for N in (41, 81):
            scene = factory(N)
            _, u, _ = pipeline.solve_scene(scene)
            h = float(scene.grid.spacing.max())
            ratios.append(sup_error(u, pipeline.oracle_scene(scene)) / h)
        assert ratios[1] <= 1.3 * ratios[0] + 1e-12

    def test_run_solve_outputs(self, pipeline, tmp_path):
        result = pipeline.run_solve(regularity_1d_scene(N=41))
        assert len(result.files) == 3
        assert result.statistics["alpha"] == 1.0
        assert result.mask.count == result.statistics["visible"]

    def test_unknown_format(self, pipeline):
        with pytest.raises(ConfigError):
            pipeline.run_solve(regularity_1d_scene(N=11), fmt="hdf5")

    def test_field_extensions_from_constants(self, tmp_path):
        config_dir = tmp_path / "config"
        config_dir.mkdir()
        (config_dir / "constants.json").write_text('{"FIELD_FORMATS": {"text": ".dat"}}')
        pipeline = VisibilityPipeline(config_dir=str(config_dir), output_dir=str(tmp_path / "out"))
        result = pipeline.run_solve(regularity_1d_scene(N=11))
        assert all(path.endswith(".dat") for path in result.files)
        result = pipeline.run_solve(regularity_1d_scene(N=11), fmt="vtk-ascii")
        assert all(path.endswith(".vtk") for path in result.files)

    def test_multiview_rejects_lower(self, pipeline):
        scene = regularity_1d_scene(N=11).model_copy(update={"envelope": "lower"})
        with pytest.raises(ConfigError):
            pipeline.run_multiview(scene)


class TestConvergence:
    def test_check_resolutions(self, pipeline):
        assert pipeline.check_resolutions([8, 16]) == [8, 16]
        for bad in ([], [4, 8], [16, 16], [32, 16]):
            with pytest.raises(ConfigError):
                pipeline.check_resolutions(bad)

    def test_cone_report(self, pipeline, tmp_path):
        table = pipeline.run_converge(cone_scene(), N_list=[32, 64])
        assert [row.N for row in table.rows] == [32, 64]
        assert table.rows[0].order is None
        assert table.rows[1].order is not None
        report = (tmp_path / "cone_convergence_report.md").read_text()
        # reference errors for N = 32 and 64
        assert "9.12e-02" in report
        assert "4.49e-02" in report
        assert "2 of 2 rows within ±20% of the reference errors." in report
        assert "{" not in report

    def test_no_reference_for_other_scenes(self, pipeline):
        assert pipeline.reference_rows(wall_scene(N=11)) == {}
        assert set(pipeline.reference_rows(cone_scene(N=11))) == {32, 64, 128, 256, 512}

    def test_reference_deviations(self, pipeline):
        table = ConvergenceTable(rows=[ConvergenceRow(N=32, h=0.129, error=0.0912 * 1.1),
                                       ConvergenceRow(N=64, h=0.0635, error=0.0449 * 1.5),
                                       ConvergenceRow(N=100, h=0.04, error=0.03)])
        deviations = pipeline.reference_deviations(cone_scene(), table)
        assert deviations == pytest.approx({32: 0.1, 64: 0.5})
        assert pipeline.reference_summary(deviations) == "1 of 2 rows within ±20% of the reference errors."
        assert pipeline.reference_deviations(wall_scene(N=11), table) == {}

    @pytest.mark.parametrize("name", sorted(FIRST_ORDER_SCENES))
    def test_error_constant_is_stable(self, pipeline, name):
        table, _ = pipeline.converge(FIRST_ORDER_SCENES[name], [41, 81, 161])
        constants = [row.error / row.h for row in table.rows]
        assert min(constants) > 0.0
        assert within_band(constants), constants

    def test_ridge_grazing_rays_converge_at_half_order(self, pipeline):
        # the ray from (1.5, -0.3) through the apex of the centre square smears its ridge
        per_h, per_sqrt_h = [], []
        for N in (41, 81, 161):
            scene = four_obstacles_scene(N)
            _, u, _ = pipeline.solve_scene(scene)
            error = sup_error(u, pipeline.oracle_scene(scene))
            h = float(scene.grid.spacing.max())
            per_h.append(error / h)
            per_sqrt_h.append(error / math.sqrt(h))
        assert within_band(per_sqrt_h), per_sqrt_h
        assert per_h[-1] > 1.3 * per_h[0]


class TestDataUtils:
    def test_orders(self):
        rows = [ConvergenceRow(N=N, h=h, error=e) for N, h, e in [(40, 0.1, 0.1), (10, 0.4, 0.4), (20, 0.2, 0.2)]]
        ordered = convergence_orders(rows)
        assert [r.N for r in ordered] == [10, 20, 40]
        assert ordered[0].order is None
        assert ordered[1].order == pytest.approx(1.0)
        assert ordered[2].order == pytest.approx(1.0)

    def test_order_undefined_for_zero_error(self):
        rows = convergence_orders([ConvergenceRow(N=10, h=0.2, error=0.0), ConvergenceRow(N=20, h=0.1, error=0.1)])
        assert rows[1].order is None

    def test_mean_order(self):
        table = ConvergenceTable(rows=[
            ConvergenceRow(N=32, h=0.1, error=0.1),
            ConvergenceRow(N=64, h=0.05, error=0.05, order=0.9),
            ConvergenceRow(N=128, h=0.025, error=0.025, order=1.1),
        ])
        assert table.mean_order() == pytest.approx(1.0)
        assert table.mean_order(min_N=128) == pytest.approx(1.1)
        assert table.finest.N == 128

    def test_components_face_connected(self):
        grid = Grid.square(5, dim=2)
        mask = np.zeros((5, 5), dtype=bool)
        mask[0, 0] = mask[1, 1] = True
        mask[3:, 3:] = True
        field = BooleanField(grid=grid, mask=mask)
        assert count_components(field) == 3
        assert mask_statistics(field) == {"visible": 6, "fraction": 6 / 25, "components": 3}
        assert count_components(BooleanField(grid=grid, mask=np.zeros((5, 5), dtype=bool))) == 0


class TestFormatting:
    def test_convergence_rows(self):
        rows = [ConvergenceRow(N=32, h=0.0645, error=0.09), ConvergenceRow(N=64, h=0.0317, error=0.045, order=0.98)]
        lines = format_convergence_rows(rows).splitlines()
        assert lines[0].split() == ["N", "h", "error", "order"]
        assert lines[1].split() == ["32", "6.45e-02", "9.00e-02", "-"]
        assert lines[2].split()[-1] == "0.98"

    def test_reference_deviation(self):
        rows = [ConvergenceRow(N=32, h=0.0645, error=0.1)]
        text = generate_convergence_table(rows, {32: {"error": 0.08}})
        assert text == "| 32 | 6.45e-02 | 1.00e-01 | - | 8.00e-02 | 25.0% |"
        assert generate_convergence_table(rows, {32: {"error": 0.08}}, tolerance=0.2).endswith("25.0% (outside) |")
        assert generate_convergence_table(rows, {32: {"error": 0.09}}, tolerance=0.2).endswith("11.1% |")

    def test_solve_summary(self):
        g = ScalarField.constant(Grid.square(5, dim=2), 0.3)
        report = solve(g, SolverConfig(viewpoint=Viewpoint(x_star=[0.0, 0.0])))
        line = format_solve_summary(report, {"viewpoint": [0.0, 0.0], "scale": 0.5})
        assert line.startswith("envelope=upper nodes=25 residual=0.000e+00 time=")
        assert line.endswith("viewpoint=[0.0, 0.0] scale=0.5")

    def test_template(self, tmp_path):
        path = tmp_path / "t.md"
        path.write_text("{a} and {b}\n")
        assert fill_report_template(str(path), {"a": 1}) == "1 and {b}\n"
        with pytest.raises(FieldIOError):
            fill_report_template(str(tmp_path / "missing.md"), {})
