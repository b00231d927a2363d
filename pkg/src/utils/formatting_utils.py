"""
Formatting Utilities Module

This module provides utility functions for formatting solver results for the
console, plain-text tables and Markdown reports.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence

from src.models.report_models import ConvergenceRow, SolveReport
from src.utils.validation_utils import FieldIOError

# Set up logging
logger = logging.getLogger(__name__)


def format_order(order: Optional[float]) -> str:
    """Observed order with two decimals, or a dash on the first row."""
    return "-" if order is None else f"{order:.2f}"


def format_convergence_rows(rows: Sequence[ConvergenceRow]) -> str:
    """
    Plain-text table: N, h, error, order; one row per line.

    Args:
        rows: Rows coarsest first.

    Returns:
        Whitespace-aligned table with a header line.
    """
    lines = [f"{'N':>6}  {'h':>10}  {'error':>10}  {'order':>6}"]
    for row in rows:
        lines.append(f"{row.N:>6}  {row.h:>10.2e}  {row.error:>10.2e}  {format_order(row.order):>6}")
    return "\n".join(lines)


def generate_convergence_table(rows: Sequence[ConvergenceRow],
                               reference: Optional[Dict[int, Dict[str, Any]]] = None,
                               tolerance: Optional[float] = None) -> str:
    """
    Markdown table rows for the convergence report.

    Args:
        rows: Measured rows.
        reference: Optional reference rows keyed by N with an "error" entry.
        tolerance: Relative deviation above which a row is marked as outside.

    Returns:
        Markdown table rows (no header).
    """
    table_rows = []
    for row in rows:
        ref = (reference or {}).get(row.N)
        if ref is not None:
            rel = abs(row.error - ref["error"]) / ref["error"]
            ref_cell = f"{ref['error']:.2e} | {rel * 100:.1f}%"
            if tolerance is not None and rel > tolerance:
                ref_cell += " (outside)"
        else:
            ref_cell = "- | -"
        table_rows.append(f"| {row.N} | {row.h:.2e} | {row.error:.2e} | {format_order(row.order)} | {ref_cell} |")
    return "\n".join(table_rows)


# format specs for the floats in a solve summary
SUMMARY_SPECS = {"residual": ".3e", "time": ".4f"}


def format_solve_summary(report: SolveReport, extra: Optional[Dict[str, Any]] = None) -> str:
    """
    One-line console summary of a solve.

    Args:
        report: The solve report.
        extra: Additional key/value pairs appended to the line.

    Returns:
        Summary string.
    """
    parts = []
    for key, value in {**report.summary(), **(extra or {})}.items():
        if isinstance(value, float):
            parts.append(f"{key}={value:{SUMMARY_SPECS.get(key, '.6g')}}")
        else:
            parts.append(f"{key}={value}")
    return " ".join(parts)


def format_file_list(paths: List[str]) -> str:
    """Markdown bullet list of written files."""
    if not paths:
        return "No files written."
    return "\n".join(f"- `{p}`" for p in paths)


def fill_report_template(template_path: str, template_data: Dict[str, Any]) -> str:
    """
    Replace {placeholder} markers in a template file.

    Args:
        template_path: Path to the template file.
        template_data: Placeholder names mapped to their values.

    Returns:
        The filled template. Unknown placeholders are left untouched.

    Raises:
        FieldIOError: If the template cannot be read.
    """
    try:
        with open(template_path, "r") as f:
            template = f.read()
    except OSError as e:
        logger.error(f"Error reading report template {template_path}: {e}")
        raise FieldIOError(f"cannot read template {template_path}: {e}") from e

    for key, value in template_data.items():
        template = template.replace("{" + key + "}", str(value))
    return template
