#!/usr/bin/env python
"""
Starshade - Main Application Entry Point

This script serves as the command-line entry point for the visibility solver.
It runs scenes through the sweep solver, the ray oracle, multiview
composition and the convergence study.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import yaml

from src.pipeline.visibility_pipeline import VisibilityPipeline
from src.tools.field_io import FORMATS
from src.utils.formatting_utils import format_convergence_rows, format_solve_summary
from src.utils.logging_utils import DEFAULT_FORMAT, log_exception, setup_logging
from src.utils.validation_utils import (
    ConfigError,
    FieldIOError,
    SceneParseError,
    VisibilityError,
)

# Set up logging
logger = logging.getLogger("starshade")

BASE_DIR = os.path.dirname(os.path.abspath(__file__))

DEFAULT_EXIT_CODES = {
    "SUCCESS": 0,
    "USAGE_ERROR": 1,
    "PARSE_ERROR": 2,
    "VALIDATION_ERROR": 3,
    "IO_ERROR": 4,
    "SOLVER_ERROR": 5,
}


def load_settings() -> Dict[str, Any]:
    """Load application settings from configuration files."""
    config_path = os.path.join(BASE_DIR, "config", "settings.yaml")
    try:
        with open(config_path, "r") as f:
            return yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        print(f"Error loading settings: {e}", file=sys.stderr)
        return {}


def load_constants() -> Dict[str, Any]:
    """Load config/constants.json; empty if unreadable."""
    path = os.path.join(BASE_DIR, "config", "constants.json")
    try:
        with open(path, "r") as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        print(f"Error loading constants: {e}", file=sys.stderr)
        return {}


def load_exit_codes(constants: Optional[Dict[str, Any]] = None) -> Dict[str, int]:
    """Exit codes from constants.json, falling back to the defaults."""
    constants = load_constants() if constants is None else constants
    return {**DEFAULT_EXIT_CODES, **constants.get("EXIT_CODES", {})}


def parse_N_list(text: str) -> List[int]:
    """'32,64,128' -> [32, 64, 128]."""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def make_pipeline(args, settings: Dict[str, Any]) -> VisibilityPipeline:
    return VisibilityPipeline(output_dir=args.out, settings=settings)


def solve(args, settings: Dict[str, Any]) -> None:
    """
    Solve a scene and write u, g and the visibility mask.

    Args:
        args: Command line arguments
        settings: Application settings
    """
    pipeline = make_pipeline(args, settings)
    scene = pipeline.load(args.config)
    result = pipeline.run_solve(scene, alpha=args.alpha, fmt=args.format)
    for report in result.reports:
        print(format_solve_summary(report))
    print(f"visible nodes: {result.statistics['visible']} "
          f"({100.0 * result.statistics['fraction']:.1f}%), alpha={result.statistics['alpha']}")
    for path in result.files:
        print(f"wrote {path}")


def oracle(args, settings: Dict[str, Any]) -> None:
    """
    Ray-trace a scene and compare the sweep solution against it.

    Args:
        args: Command line arguments
        settings: Application settings
    """
    pipeline = make_pipeline(args, settings)
    scene = pipeline.load(args.config)
    result = pipeline.run_oracle(scene, step=args.oracle_step, alpha=args.alpha, fmt=args.format)
    print(f"sup error of the sweep against the oracle: {result.statistics['sup_error']:.3e}")
    for path in result.files:
        print(f"wrote {path}")


def multiview(args, settings: Dict[str, Any]) -> None:
    """
    Solve every viewpoint and write the any/all compositions.

    Args:
        args: Command line arguments
        settings: Application settings
    """
    pipeline = make_pipeline(args, settings)
    scene = pipeline.load(args.config)
    result = pipeline.run_multiview(scene, alpha=args.alpha, fmt=args.format)
    for report in result.reports:
        print(format_solve_summary(report, {"viewpoint": report.viewpoint.x_star}))
    for key in sorted(result.statistics):
        print(f"{key}: {result.statistics[key]}")
    for path in result.files:
        print(f"wrote {path}")


def converge(args, settings: Dict[str, Any]) -> None:
    """
    Run the convergence study against the ray oracle.

    Args:
        args: Command line arguments
        settings: Application settings
    """
    pipeline = make_pipeline(args, settings)
    scene = pipeline.load(args.config)
    table = pipeline.run_converge(scene, N_list=args.N, step=args.oracle_step)
    print(format_convergence_rows(table.rows))


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="Scene file, or the name of a built-in scene")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--oracle-step", type=float, help="Arc-length sampling step of the ray oracle")


def setup_parser(settings: Optional[Dict[str, Any]] = None) -> argparse.ArgumentParser:
    """Set up command line argument parser."""
    application = (settings or {}).get("application", {})
    name = application.get("name", "Starshade")
    parser = argparse.ArgumentParser(description=application.get("description", f"{name} visibility solver"))
    parser.add_argument("--version", action="version", version=f"{name} {application.get('version', 'unknown')}")
    parser.add_argument("--log-level", help="Override the configured log level")
    subparsers = parser.add_subparsers(dest="command", help="Command to execute")

    # Solve command
    solve_parser = subparsers.add_parser("solve", help="Solve a scene")
    add_common_arguments(solve_parser)
    solve_parser.add_argument("--alpha", type=float, help="Visibility level (u <= alpha is visible)")
    solve_parser.add_argument("--format", choices=FORMATS, help="Field file format")
    solve_parser.set_defaults(func=solve)

    # Converge command
    converge_parser = subparsers.add_parser("converge", help="Convergence study against the ray oracle")
    add_common_arguments(converge_parser)
    converge_parser.add_argument("--N", type=parse_N_list, help="Comma-separated resolutions, e.g. 32,64,128")
    converge_parser.set_defaults(func=converge)

    # Oracle command
    oracle_parser = subparsers.add_parser("oracle", help="Ray-traced reference field")
    add_common_arguments(oracle_parser)
    oracle_parser.add_argument("--alpha", type=float, help="Visibility level (u <= alpha is visible)")
    oracle_parser.add_argument("--format", choices=FORMATS, help="Field file format")
    oracle_parser.set_defaults(func=oracle)

    # Multiview command
    multiview_parser = subparsers.add_parser("multiview", help="Per-viewpoint solves and their compositions")
    add_common_arguments(multiview_parser)
    multiview_parser.add_argument("--alpha", type=float, help="Visibility level (u <= alpha is visible)")
    multiview_parser.add_argument("--format", choices=FORMATS, help="Field file format")
    multiview_parser.set_defaults(func=multiview)

    return parser


def error_kind(error: Exception) -> str:
    """The EXIT_CODES / ERROR_MESSAGES key for an exception."""
    if isinstance(error, SceneParseError):
        return "PARSE_ERROR"
    if isinstance(error, ConfigError):
        return "VALIDATION_ERROR"
    if isinstance(error, FieldIOError):
        return "IO_ERROR"
    return "SOLVER_ERROR"


def exit_code_for(error: Exception, codes: Dict[str, int]) -> int:
    """Map an exception to the configured exit code."""
    return codes[error_kind(error)]


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application."""
    # Load settings
    settings = load_settings()
    constants = load_constants()
    codes = load_exit_codes(constants)
    messages = constants.get("ERROR_MESSAGES", {})

    # Parse command line arguments
    parser = setup_parser(settings)
    args = parser.parse_args(argv)

    # Set up logging
    log_settings = settings.get("logging", {})
    setup_logging(
        log_file=log_settings.get("file", "./logs/starshade.log"),
        log_level=args.log_level or log_settings.get("level", "INFO"),
        log_format=log_settings.get("format", DEFAULT_FORMAT),
        max_bytes=int(log_settings.get("max_bytes", 10 * 1024 * 1024)),
        backup_count=int(log_settings.get("backup_count", 5)),
    )

    # Execute the appropriate command
    if not hasattr(args, "func"):
        parser.print_help()
        return codes["USAGE_ERROR"]

    try:
        args.func(args, settings)
    except VisibilityError as e:
        log_exception(logger, e, f"{args.command} {args.config}")
        print(f"{messages.get(error_kind(e), 'error')}: {e}", file=sys.stderr)
        return exit_code_for(e, codes)
    return codes["SUCCESS"]


if __name__ == "__main__":
    sys.exit(main())
