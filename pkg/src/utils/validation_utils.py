"""
Validation Utilities Module

This module defines the exception hierarchy used across the solver and the
helpers that turn YAML and pydantic failures into those exceptions.
"""

import logging
from typing import Any, Dict, Optional

import yaml
from pydantic import ValidationError

# Set up logging
logger = logging.getLogger(__name__)


class VisibilityError(Exception):
    """Base class for all errors raised by the visibility solver."""
    pass


class GridIndexError(VisibilityError, IndexError):
    """Raised when a multi-index lies outside the grid."""
    pass


class DomainError(VisibilityError, ValueError):
    """Raised when a point lies outside the grid box."""
    pass


class DegenerateRayError(VisibilityError, ValueError):
    """Raised when a foot point is requested for the viewpoint itself."""
    pass


class ConfigError(VisibilityError, ValueError):
    """Exception raised for invalid configuration values."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class SceneParseError(VisibilityError):
    """Exception raised when a scene file is not valid YAML."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class FieldIOError(VisibilityError, OSError):
    """Exception raised for field and point-cloud file failures."""
    pass


def parse_yaml_text(text: str, source: str = "<string>") -> Dict[str, Any]:
    """
    Parse YAML text into a mapping.

    Args:
        text: YAML document.
        source: Name used in error messages.

    Returns:
        Parsed mapping.

    Raises:
        SceneParseError: If the text is not valid YAML or not a mapping.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line = mark.line + 1 if mark else None
        column = mark.column + 1 if mark else None
        raise SceneParseError(f"{source}: {e.problem or e}", line=line, column=column) from e
    except yaml.YAMLError as e:
        raise SceneParseError(f"{source}: {e}") from e

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise SceneParseError(f"{source}: top level must be a mapping", line=1, column=1)
    return data


def config_error_from_validation(e: ValidationError) -> ConfigError:
    """
    Convert a pydantic ValidationError into a ConfigError naming the first bad field.

    Args:
        e: The pydantic error.

    Returns:
        ConfigError carrying the dotted field path.
    """
    errors = e.errors()
    if not errors:
        return ConfigError(str(e))

    first = errors[0]
    field = ".".join(str(part) for part in first.get("loc", ())) or None
    logger.debug(f"Validation failed with {len(errors)} error(s); first at {field}")
    return ConfigError(first.get("msg", "invalid value"), field=field)


class SolverError(VisibilityError):
    """Raised when a solve misses its fixpoint or visit-count guarantees."""
    pass
