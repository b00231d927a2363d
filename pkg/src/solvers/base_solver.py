"""
Base Solver Module

This module provides the BaseSolver class that the sweep solver, the ray
oracle and the multiview composer extend. It holds the grid and the logger
every solver works with.
"""

import logging
import time
from contextlib import contextmanager
from typing import Iterator, List, Optional

from src.models.grid_models import Grid, ScalarField
from src.utils.validation_utils import ConfigError

# Set up logging
logger = logging.getLogger(__name__)


class BaseSolver:
    """
    Base class for the visibility solvers.

    Subclasses work on a single grid; fields passed in are checked against it.
    """

    def __init__(self, grid: Grid, name: Optional[str] = None, verbose: bool = False):
        """
        Initialize the solver.

        Args:
            grid: Grid every field handled by this solver lives on.
            name: Name used in log messages; defaults to the class name.
            verbose: Log per-solve details at INFO instead of DEBUG.
        """
        self.grid = grid
        self.name = name or type(self).__name__
        self.verbose = verbose
        self.logger = logging.getLogger(f"{type(self).__module__}.{self.name}")

        logger.debug(f"Initialized {self.name} on grid {grid.shape}")

    def log_detail(self, message: str) -> None:
        """Log a per-solve detail at the verbosity chosen for this solver."""
        if self.verbose:
            self.logger.info(message)
        else:
            self.logger.debug(message)

    def check_field(self, field: ScalarField, label: str = "field") -> None:
        """
        Ensure a field lives on this solver's grid.

        Raises:
            ConfigError: On a grid mismatch.
        """
        if field.grid != self.grid:
            raise ConfigError(f"lives on grid {field.grid.shape}, expected {self.grid.shape}", field=label)

    @contextmanager
    def timed(self, label: str) -> Iterator[List[float]]:
        """
        Time a block; the elapsed seconds are appended to the yielded list.
        """
        elapsed: List[float] = []
        start = time.perf_counter()
        try:
            yield elapsed
        finally:
            elapsed.append(time.perf_counter() - start)
            self.log_detail(f"{self.name}: {label} took {elapsed[0]:.4f}s")
