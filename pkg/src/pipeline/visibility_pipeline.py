"""
Visibility Pipeline Module

This module defines the VisibilityPipeline class, which ties scenes, the sweep
solver, the ray oracle and multiview composition together for the command
line: it loads settings, runs a solve, an oracle evaluation, a multiview
composition or a convergence study, and writes the resulting fields and
reports.
"""

import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import ValidationError

from src.models.grid_models import Grid, ScalarField, ViewpointSet
from src.models.obstacle_models import ConstantSpec, MaxSpec
from src.models.report_models import ConvergenceRow, ConvergenceTable, RunResult, SolveReport
from src.models.scene_models import LeafExpr, MaxExpr, MinExpr, RaySamplingConfig, SceneConfig, SolverConfig
from src.solvers.multiview import MultiviewSolver, compose
from src.solvers.ray_oracle import RayOracle
from src.solvers.sweep_solver import SweepSolver, clamp_at_viewpoint, is_visible, warm_up
from src.tools.field_io import FORMATS, export_field, field_extensions
from src.tools.obstacle_tools import eval_obstacle, sample_obstacle
from src.tools.scene_library import EXAMPLE_SCENES, example_scene, load_scene
from src.utils.data_utils import convergence_orders, field_statistics, mask_statistics, sup_error
from src.utils.formatting_utils import (
    fill_report_template,
    format_convergence_rows,
    format_file_list,
    generate_convergence_table,
)
from src.utils.validation_utils import ConfigError, FieldIOError, SolverError, config_error_from_validation

# Set up logging
logger = logging.getLogger(__name__)

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


class VisibilityPipeline:
    """
    VisibilityPipeline runs scenes end to end.

    Settings come from config/settings.yaml, reference data and exit codes
    from config/constants.json; missing files fall back to built-in defaults.
    """

    def __init__(self, config_dir: Optional[str] = None, output_dir: Optional[str] = None,
                 settings: Optional[Dict[str, Any]] = None):
        """
        Initialize the pipeline.

        Args:
            config_dir: Directory containing settings.yaml and constants.json.
            output_dir: Where fields and reports are written; overrides settings.
            settings: Settings mapping to use instead of settings.yaml.
        """
        self.config_dir = config_dir or os.path.join(PROJECT_ROOT, "config")
        self.settings = settings if settings is not None else self._load_yaml_config("settings.yaml")
        self.constants = self._load_json_config("constants.json")

        output = self.settings.get("output", {})
        self.output_dir = output_dir or output.get("directory", "./output")
        self.default_format = output.get("default_format", "text")
        self.template_dir = self._resolve(output.get("template_directory", "./templates"))
        self.extensions = field_extensions(self.constants.get("FIELD_FORMATS"))
        self.relative_tolerance = float(self.settings.get("convergence", {}).get("relative_tolerance", 0.2))
        self.max_workers = int(self.settings.get("concurrency", {}).get("max_workers", 1))
        self.residual_factor = float(self.settings.get("solver", {}).get("residual_tolerance_factor", 1e-12))
        self._warmed = not self.settings.get("solver", {}).get("warm_up", True)

        logger.info("VisibilityPipeline initialized")

    def _resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(PROJECT_ROOT, path))

    def _load_yaml_config(self, filename: str) -> Dict[str, Any]:
        """
        Load YAML configuration from a file.

        Args:
            filename: Name of the YAML file.

        Returns:
            Dictionary containing the configuration, empty if unreadable.
        """
        config_path = os.path.join(self.config_dir, filename)
        try:
            with open(config_path, "r") as f:
                config = yaml.safe_load(f) or {}
            logger.info(f"Loaded configuration from {config_path}")
            return config
        except (OSError, yaml.YAMLError) as e:
            logger.warning(f"Error loading {filename}, using defaults: {e}")
            return {}

    def _load_json_config(self, filename: str) -> Dict[str, Any]:
        """
        Load JSON configuration from a file.

        Args:
            filename: Name of the JSON file.

        Returns:
            Dictionary containing the configuration, empty if unreadable.
        """
        config_path = os.path.join(self.config_dir, filename)
        try:
            with open(config_path, "r") as f:
                config = json.load(f)
            logger.info(f"Loaded configuration from {config_path}")
            return config
        except (OSError, ValueError) as e:
            logger.warning(f"Error loading {filename}, using defaults: {e}")
            return {}

    def output_name(self, key: str, default: str) -> str:
        return self.constants.get("OUTPUT_NAMES", {}).get(key, default)

    # Scene handling

    def load(self, source: str) -> SceneConfig:
        """
        A scene from a file path, or a built-in example by name.

        Raises:
            FieldIOError: If source is neither a readable file nor an example name.
        """
        if os.path.exists(source):
            return load_scene(source)
        if source in EXAMPLE_SCENES:
            logger.info(f"Using built-in scene '{source}'")
            return example_scene(source)
        return load_scene(source)

    @staticmethod
    def with_resolution(scene: SceneConfig, N: Optional[int]) -> SceneConfig:
        """The scene with N nodes per axis on the same box."""
        if N is None:
            return scene
        grid = Grid(lo=scene.grid.lo, hi=scene.grid.hi, n=[N] * scene.grid.dim)
        return scene.model_copy(update={"grid": grid})

    def anchor_values(self, scene: SceneConfig) -> List[float]:
        """g(x*) for every viewpoint, evaluated on the obstacle itself."""
        return [eval_obstacle(scene.obstacle, vp.x_star, scene.grid) for vp in scene.viewpoints]

    def obstacle_field(self, scene: SceneConfig) -> ScalarField:
        """g sampled on the scene grid, clamped at the viewpoint if requested."""
        g = sample_obstacle(scene.obstacle, scene.grid)
        if scene.clamp_at_viewpoint:
            if len(scene.viewpoints) != 1:
                raise ConfigError("clamping needs exactly one viewpoint", field="clamp_at_viewpoint")
            g = clamp_at_viewpoint(g, self.anchor_values(scene)[0])
        return g

    def sampling_config(self, scene: SceneConfig, step: Optional[float] = None,
                        grid: Optional[Grid] = None) -> RaySamplingConfig:
        """
        Oracle step: explicit, then the scene's, then min spacing / step_divisor.

        Raises:
            ConfigError: If the step or the oracle settings are out of range.
        """
        oracle = self.settings.get("oracle", {})
        grid = grid or scene.grid
        step = step if step is not None else scene.oracle_step
        kwargs = {
            "batch_points": int(oracle.get("batch_points", 2_000_000)),
            "workers": int(oracle.get("workers", 1)),
        }
        try:
            if step is not None:
                return RaySamplingConfig(step=step, **kwargs)
            return RaySamplingConfig.for_grid(grid, divisor=float(oracle.get("step_divisor", 8)), **kwargs)
        except ValidationError as e:
            raise config_error_from_validation(e) from e

    def _composition(self, scene: SceneConfig):
        leaves = [LeafExpr(index=i) for i in range(len(scene.viewpoints))]
        if scene.semantics == "custom":
            return scene.compose
        if scene.semantics == "all":
            return MaxExpr(children=leaves)
        return MinExpr(children=leaves)

    def _warm_up(self) -> None:
        if not self._warmed:
            warm_up()
            self._warmed = True

    # Solving

    def _check_report(self, report: SolveReport, g: ScalarField) -> None:
        tolerance = self.residual_factor * (1.0 + float(np.abs(g.values).max()))
        if report.max_abs_residual > tolerance:
            raise SolverError(f"residual {report.max_abs_residual:.3e} exceeds {tolerance:.3e}")
        if not report.single_visit:
            raise SolverError(f"{report.sweep_node_count} updates for {g.grid.size} nodes")

    def solve_scene(self, scene: SceneConfig) -> Tuple[ScalarField, ScalarField, List[SolveReport]]:
        """
        Solve a scene for its envelope and viewpoint semantics.

        Returns:
            (g, u, reports): the obstacle field, the composed solution and
            one report per viewpoint solve.

        Raises:
            SolverError: If a solve misses the fixpoint.
        """
        self._warm_up()
        g = self.obstacle_field(scene)
        anchors = self.anchor_values(scene)

        if scene.envelope == "lower":
            cfg = SolverConfig(envelope="lower", viewpoint=scene.viewpoints[0])
            reports = [SweepSolver(scene.grid).solve(g, cfg)]
            u = reports[0].solution
        else:
            solver = MultiviewSolver(scene.grid, max_workers=self.max_workers)
            reports = solver.solve_each(g, ViewpointSet(viewpoints=scene.viewpoints), anchors)
            u = compose([r.solution for r in reports], self._composition(scene))

        for report in reports:
            self._check_report(report, g)
        logger.info(f"Solved '{scene.name}' on {scene.grid.shape}: "
                    f"residual {max(r.max_abs_residual for r in reports):.3e}, "
                    f"{sum(r.wall_time for r in reports):.4f}s")
        return g, u, reports

    def oracle_scene(self, scene: SceneConfig, step: Optional[float] = None) -> ScalarField:
        """The ray-traced reference for the scene's envelope and semantics."""
        cfg = self.sampling_config(scene, step)
        spec = scene.obstacle
        if scene.clamp_at_viewpoint:
            spec = MaxSpec(children=[spec, ConstantSpec(value=self.anchor_values(scene)[0])])
        oracle = RayOracle(spec, scene.grid, cfg)
        if scene.envelope == "lower":
            return oracle.field(scene.viewpoints[0], "lower")
        fields = [oracle.field(vp, "upper") for vp in scene.viewpoints]
        return compose(fields, self._composition(scene))

    # Output

    def _out_dir(self, out_dir: Optional[str]) -> str:
        return out_dir or self.output_dir

    def _field_path(self, out_dir: str, scene: SceneConfig, name: str, fmt: str) -> str:
        return os.path.join(out_dir, f"{scene.name}_{name}{self.extensions[fmt]}")

    def _check_format(self, fmt: Optional[str]) -> str:
        fmt = fmt or self.default_format
        if fmt not in FORMATS:
            raise ConfigError(f"unknown format '{fmt}' (expected one of {', '.join(FORMATS)})", field="format")
        return fmt

    def run_solve(self, scene: SceneConfig, alpha: Optional[float] = None,
                  out_dir: Optional[str] = None, fmt: Optional[str] = None) -> RunResult:
        """
        Solve a scene and write u, g and the visibility mask.

        Args:
            scene: The scene.
            alpha: Level overriding scene.alpha.
            out_dir: Output directory overriding the settings.
            fmt: "text" or "vtk-ascii".

        Returns:
            RunResult with the solution, mask, reports and written files.
        """
        fmt = self._check_format(fmt)
        out_dir = self._out_dir(out_dir)
        level = scene.alpha if alpha is None else alpha

        g, u, reports = self.solve_scene(scene)
        mask = is_visible(u, level)
        files = [
            export_field(u, self._field_path(out_dir, scene, self.output_name("SOLUTION", "u"), fmt), fmt, "u"),
            export_field(g, self._field_path(out_dir, scene, self.output_name("OBSTACLE", "g"), fmt), fmt, "g"),
            export_field(mask.as_field(), self._field_path(out_dir, scene, self.output_name("MASK", "visible"), fmt),
                         fmt, "visible"),
        ]
        stats = {"alpha": level, **mask_statistics(mask), **{f"u_{k}": v for k, v in field_statistics(u).items()}}
        return RunResult(scene=scene.name, solution=u, mask=mask, reports=reports, files=files, statistics=stats)

    def run_oracle(self, scene: SceneConfig, step: Optional[float] = None, alpha: Optional[float] = None,
                   out_dir: Optional[str] = None, fmt: Optional[str] = None) -> RunResult:
        """
        Ray-trace the scene, write the oracle field and report its distance to the sweep solution.
        """
        fmt = self._check_format(fmt)
        out_dir = self._out_dir(out_dir)
        level = scene.alpha if alpha is None else alpha

        reference = self.oracle_scene(scene, step)
        _, u, reports = self.solve_scene(scene)
        mask = is_visible(reference, level)
        files = [
            export_field(reference, self._field_path(out_dir, scene, self.output_name("ORACLE", "oracle"), fmt),
                         fmt, "oracle"),
        ]
        stats = {"alpha": level, "sup_error": sup_error(u, reference), **mask_statistics(mask)}
        logger.info(f"Oracle for '{scene.name}': sup error of the sweep {stats['sup_error']:.3e}")
        return RunResult(scene=scene.name, solution=reference, mask=mask, reports=reports, files=files,
                         statistics=stats)

    def run_multiview(self, scene: SceneConfig, alpha: Optional[float] = None,
                      out_dir: Optional[str] = None, fmt: Optional[str] = None) -> RunResult:
        """
        Per-viewpoint solves plus the any, all and scene compositions, each with its mask.
        """
        fmt = self._check_format(fmt)
        out_dir = self._out_dir(out_dir)
        level = scene.alpha if alpha is None else alpha
        if scene.envelope == "lower":
            raise ConfigError("multiview composition applies to the upper envelope", field="envelope")

        self._warm_up()
        g = self.obstacle_field(scene)
        solver = MultiviewSolver(scene.grid, max_workers=self.max_workers)
        reports = solver.solve_each(g, ViewpointSet(viewpoints=scene.viewpoints), self.anchor_values(scene))
        for report in reports:
            self._check_report(report, g)
        fields = [r.solution for r in reports]
        leaves = [LeafExpr(index=i) for i in range(len(fields))]
        composed = {
            "any": compose(fields, MinExpr(children=leaves)),
            "all": compose(fields, MaxExpr(children=leaves)),
        }
        if scene.semantics == "custom":
            composed["custom"] = compose(fields, scene.compose)

        files, stats = [], {"alpha": level}
        for i, field in enumerate(fields):
            files.append(export_field(field, self._field_path(out_dir, scene, f"u{i}", fmt), fmt, f"u{i}"))
        for label, field in composed.items():
            mask = is_visible(field, level)
            files.append(export_field(field, self._field_path(out_dir, scene, f"u_{label}", fmt), fmt, f"u_{label}"))
            files.append(export_field(mask.as_field(), self._field_path(out_dir, scene, f"visible_{label}", fmt),
                                      fmt, f"visible_{label}"))
            for key, value in mask_statistics(mask).items():
                stats[f"{label}_{key}"] = value

        final = composed[scene.semantics] if scene.semantics in composed else composed["any"]
        return RunResult(scene=scene.name, solution=final, mask=is_visible(final, level), reports=reports,
                         files=files, statistics=stats)

    # Convergence study

    def check_resolutions(self, N_list: Sequence[int]) -> List[int]:
        """
        Raises:
            ConfigError: Unless N_list is non-empty, strictly increasing and each N >= min_N.
        """
        min_N = int(self.settings.get("convergence", {}).get("min_N", 8))
        N_list = [int(N) for N in N_list]
        if not N_list:
            raise ConfigError("at least one resolution is required", field="N")
        if any(N < min_N for N in N_list):
            raise ConfigError(f"every N must be at least {min_N}", field="N")
        if any(b <= a for a, b in zip(N_list, N_list[1:])):
            raise ConfigError("resolutions must be strictly increasing", field="N")
        return N_list

    def converge(self, scene: SceneConfig, N_list: Sequence[int],
                 step: Optional[float] = None) -> Tuple[ConvergenceTable, List[SolveReport]]:
        """
        Solve at each N and measure the max node error against the ray oracle.

        The oracle step is the finest grid's min spacing / step_divisor unless given.

        Returns:
            The table (orders filled in) and the last report per N.
        """
        N_list = self.check_resolutions(N_list)
        finest = self.with_resolution(scene, N_list[-1]).grid
        cfg_step = self.sampling_config(scene, step, grid=finest).step

        rows, last_reports = [], []
        for N in N_list:
            refined = self.with_resolution(scene, N)
            _, u, reports = self.solve_scene(refined)
            reference = self.oracle_scene(refined, cfg_step)
            row = ConvergenceRow(N=N, h=float(refined.grid.spacing.max()), error=sup_error(u, reference),
                                 wall_time=sum(r.wall_time for r in reports))
            rows.append(row)
            last_reports.append(reports[-1])
            logger.info(f"N={N}: h={row.h:.3e} error={row.error:.3e}")

        table = ConvergenceTable(scene=scene.name, rows=convergence_orders(rows))
        return table, last_reports

    def run_converge(self, scene: SceneConfig, N_list: Optional[Sequence[int]] = None,
                     step: Optional[float] = None, out_dir: Optional[str] = None) -> ConvergenceTable:
        """Convergence study written as a text table and a Markdown report."""
        convergence = self.settings.get("convergence", {})
        N_list = list(N_list or convergence.get("default_N", [32, 64, 128, 256, 512]))
        out_dir = self._out_dir(out_dir)
        table, reports = self.converge(scene, N_list, step)

        table_path = os.path.join(out_dir, f"{scene.name}_{self.output_name('CONVERGENCE_TABLE', 'convergence.txt')}")
        report_path = os.path.join(out_dir, f"{scene.name}_{self.output_name('CONVERGENCE_REPORT', 'convergence_report.md')}")
        text = format_convergence_rows(table.rows)
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(table_path, "w") as f:
                f.write(text + "\n")
            with open(report_path, "w") as f:
                f.write(self.render_convergence_report(scene, table, reports, [table_path, report_path], step))
        except OSError as e:
            raise FieldIOError(f"cannot write convergence output to {out_dir}: {e}") from e

        logger.info(f"Convergence table written to {table_path}")
        return table

    def reference_rows(self, scene: SceneConfig) -> Dict[int, Dict[str, Any]]:
        """Published reference rows, only for the cone benchmark."""
        if scene.name != "cone":
            return {}
        return {int(row["N"]): row for row in self.constants.get("TABLE_1", [])}

    def reference_deviations(self, scene: SceneConfig, table: ConvergenceTable) -> Dict[int, float]:
        """Relative distance of each measured error from its reference row, keyed by N."""
        reference = self.reference_rows(scene)
        deviations = {}
        for row in table.rows:
            if row.N in reference:
                expected = float(reference[row.N]["error"])
                deviations[row.N] = abs(row.error - expected) / expected
        for N, deviation in deviations.items():
            if deviation > self.relative_tolerance:
                logger.warning(f"N={N}: error deviates {deviation:.1%} from the reference "
                               f"(tolerance {self.relative_tolerance:.0%})")
        return deviations

    def reference_summary(self, deviations: Dict[int, float]) -> str:
        if not deviations:
            return "No reference errors for this scene."
        within = sum(1 for d in deviations.values() if d <= self.relative_tolerance)
        return (f"{within} of {len(deviations)} rows within ±{self.relative_tolerance:.0%} "
                f"of the reference errors.")

    def render_convergence_report(self, scene: SceneConfig, table: ConvergenceTable,
                                  reports: List[SolveReport], files: List[str],
                                  step: Optional[float] = None) -> str:
        """Fill templates/convergence_report.md."""
        template_name = self.settings.get("output", {}).get("convergence_template", "convergence_report.md")
        min_N = 128
        mean_order = table.mean_order(min_N=min_N)
        diagnostics = "\n".join(
            f"| {row.N} | {report.max_abs_residual:.2e} | {report.wall_time:.4f} |"
            for row, report in zip(table.rows, reports)
        )
        data = {
            "scene_name": scene.name,
            "report_date": datetime.now().strftime("%Y-%m-%d"),
            "viewpoint": ", ".join(str(vp.x_star) for vp in scene.viewpoints),
            "envelope": scene.envelope,
            "oracle_step": f"{step:.4g}" if step is not None else "min h / step_divisor at the finest N",
            "scene_description": scene.description or "No description.",
            "convergence_table": generate_convergence_table(table.rows, self.reference_rows(scene),
                                                            self.relative_tolerance),
            "reference_summary": self.reference_summary(self.reference_deviations(scene, table)),
            "order_min_N": min_N,
            "mean_order": "-" if mean_order is None else f"{mean_order:.2f}",
            "diagnostics_table": diagnostics,
            "file_list": format_file_list(files),
        }
        return fill_report_template(os.path.join(self.template_dir, template_name), data)
