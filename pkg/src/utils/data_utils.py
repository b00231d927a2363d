"""
Data Utilities Module

This module provides the error norms, observed convergence orders and mask
statistics used by the convergence harness and the CLI summaries.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import ndimage

from src.models.grid_models import BooleanField, ScalarField
from src.models.report_models import ConvergenceRow
from src.utils.validation_utils import ConfigError

# Set up logging
logger = logging.getLogger(__name__)


def sup_error(a: ScalarField, b: ScalarField) -> float:
    """
    Maximum nodewise difference |a - b|.

    Raises:
        ConfigError: If the fields live on different grids.
    """
    if not a.same_grid(b):
        raise ConfigError("fields live on different grids", field="fields")
    return float(np.max(np.abs(a.values - b.values)))


def convergence_orders(rows: Sequence[ConvergenceRow]) -> List[ConvergenceRow]:
    """
    Fill in observed orders log(e_prev / e) / log(h_prev / h).

    The first row gets no order; a row whose error or the previous error is
    zero gets none either.

    Returns:
        New rows, coarsest first.
    """
    ordered = sorted(rows, key=lambda r: r.N)
    result = []
    for k, row in enumerate(ordered):
        order: Optional[float] = None
        if k > 0:
            prev = ordered[k - 1]
            if prev.error > 0.0 and row.error > 0.0 and prev.h != row.h:
                order = math.log(prev.error / row.error) / math.log(prev.h / row.h)
        result.append(row.model_copy(update={"order": order}))
    return result


def count_components(mask: BooleanField) -> int:
    """
    Number of face-connected components of the True nodes.

    Args:
        mask: Per-node boolean field.

    Returns:
        Component count (0 for an empty mask).
    """
    structure = ndimage.generate_binary_structure(mask.grid.dim, 1)
    _, count = ndimage.label(mask.mask, structure=structure)
    return int(count)


def field_statistics(field: ScalarField) -> Dict[str, float]:
    """min / max / mean of a field for summaries."""
    values = field.values
    return {
        "min": float(values.min()),
        "max": float(values.max()),
        "mean": float(values.mean()),
    }


def mask_statistics(mask: BooleanField) -> Dict[str, float]:
    """Visible node count, fraction and component count."""
    size = mask.grid.size
    return {
        "visible": mask.count,
        "fraction": mask.count / size if size else 0.0,
        "components": count_components(mask),
    }
