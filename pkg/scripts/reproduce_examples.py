#!/usr/bin/env python
"""
Reproduce Examples Script

Runs every built-in scene through the pipeline: a solve for each scene, the
multiview compositions where a scene has several viewpoints, the lower
envelope for the 1D and two-point scenes, and the cone convergence study.
A summary of the runs is written next to the fields.
"""

import argparse
import logging
import os
import sys
from typing import Any, Dict, List

import yaml

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.pipeline.visibility_pipeline import PROJECT_ROOT, VisibilityPipeline
from src.tools.scene_library import example_names, example_scene
from src.utils.data_utils import count_components
from src.utils.formatting_utils import format_convergence_rows
from src.utils.logging_utils import setup_logging
from src.utils.validation_utils import VisibilityError

# Set up logging
logger = logging.getLogger("starshade.reproduce")

LOWER_ENVELOPE_SCENES = ("regularity_1d", "two_points", "two_points_clamped")


def run_scene(pipeline: VisibilityPipeline, name: str, out_dir: str, fmt: str) -> Dict[str, Any]:
    """Solve one library scene and collect its statistics."""
    scene = example_scene(name)
    entry: Dict[str, Any] = {"alpha": scene.alpha, "grid": list(scene.grid.shape)}

    if len(scene.viewpoints) > 1:
        result = pipeline.run_multiview(scene, out_dir=out_dir, fmt=fmt)
    else:
        result = pipeline.run_solve(scene, out_dir=out_dir, fmt=fmt)
    entry["visible_fraction"] = float(result.mask.count / scene.grid.size)
    entry["components"] = int(count_components(result.mask))
    entry["max_abs_residual"] = float(result.max_abs_residual)
    entry["wall_time"] = float(result.wall_time)
    entry["files"] = len(result.files)

    if name in LOWER_ENVELOPE_SCENES:
        lower = scene.model_copy(update={"name": f"{name}_lower", "envelope": "lower"})
        lower_result = pipeline.run_solve(lower, out_dir=out_dir, fmt=fmt)
        entry["lower_max_abs_residual"] = float(lower_result.max_abs_residual)

    logger.info(f"{name}: {entry}")
    return entry


def main(argv: List[str] = None) -> int:
    parser = argparse.ArgumentParser(description="Run every built-in scene")
    parser.add_argument("--out", default=os.path.join(PROJECT_ROOT, "output", "examples"))
    parser.add_argument("--format", choices=["text", "vtk-ascii"], default="vtk-ascii")
    parser.add_argument("--N", default="32,64,128,256,512", help="Resolutions for the cone study")
    parser.add_argument("--skip-convergence", action="store_true")
    args = parser.parse_args(argv)

    setup_logging(log_level="INFO")
    pipeline = VisibilityPipeline(output_dir=args.out)

    summary: Dict[str, Any] = {}
    try:
        for name in example_names():
            summary[name] = run_scene(pipeline, name, args.out, args.format)

        if not args.skip_convergence:
            N_list = [int(n) for n in args.N.split(",") if n.strip()]
            table = pipeline.run_converge(example_scene("cone"), N_list=N_list, out_dir=args.out)
            print(format_convergence_rows(table.rows))
            summary["cone"]["convergence"] = [row.model_dump() for row in table.rows]
    except VisibilityError as e:
        logger.error(f"Reproduction failed: {e}")
        return 1

    os.makedirs(args.out, exist_ok=True)
    summary_path = os.path.join(args.out, "summary.yaml")
    with open(summary_path, "w") as f:
        yaml.safe_dump(summary, f, sort_keys=True)
    print(f"four_obstacles solved at alpha = {summary['four_obstacles']['alpha']}")
    print(f"wrote {summary_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
