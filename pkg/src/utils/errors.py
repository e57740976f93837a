"""
Error Types and Classification for the PR-CapsNet Engine

Every failure the library can raise is a subclass of PRCapsError. The
library itself never swallows exceptions; the command-line layer is the
only place where an exception becomes an exit code and an operator hint.

Educational Note:
Grouping exceptions into a small number of categories lets the CLI pick
an exit code and a recovery message without knowing every concrete type:
- CONFIG: the run was asked to do something invalid, or a dataset
  failed validation (exit 2)
- NUMERIC: training diverged or a gradient went non-finite (exit 3)
- IO: files are missing, unreadable or would be overwritten (exit 4)
"""

import logging
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


# ============================================================================
# Base Error
# ============================================================================

class PRCapsError(Exception):
    """Base class for all engine errors."""


# ============================================================================
# Geometry Errors
# ============================================================================

class GeometryError(PRCapsError, ValueError):
    """A manifold primitive received input outside its domain."""


class DimensionMismatchError(GeometryError):
    """Vector lengths disagree with the signature they are used with."""


class ManifoldMembershipError(GeometryError):
    """A point (or sphere component) is off its manifold beyond tolerance."""


class PsiUndefinedError(GeometryError):
    """The time block has zero norm, so the sphere direction is undefined."""


class CutLocusError(GeometryError):
    """Sphere log requested at (or numerically at) the antipode of the base."""


# ============================================================================
# Routing Errors
# ============================================================================

class RoutingError(PRCapsError):
    """
    A geometric failure inside a routing loop.

    Carries where it happened so a failing layer can be located without
    re-running the forward pass under a debugger.
    """

    def __init__(
        self,
        message: str,
        layer: Optional[int] = None,
        iteration: Optional[int] = None,
        child: Optional[int] = None,
        parent: Optional[int] = None,
    ):
        self.layer = layer
        self.iteration = iteration
        self.child = child
        self.parent = parent
        context = ", ".join(
            f"{name}={value}"
            for name, value in (
                ("layer", layer),
                ("iteration", iteration),
                ("child", child),
                ("parent", parent),
            )
            if value is not None
        )
        super().__init__(f"{message} ({context})" if context else message)


# ============================================================================
# Dataset Errors
# ============================================================================

class DatasetError(PRCapsError, ValueError):
    """A dataset file or in-memory dataset violates its invariants."""


class MissingFileError(DatasetError, FileNotFoundError):
    """A required dataset file does not exist."""


class RaggedRowsError(DatasetError):
    """Rows of a table have inconsistent lengths or counts."""


class LabelRangeError(DatasetError):
    """A label is negative or not below the number of classes."""


class OverlappingMasksError(DatasetError):
    """A node or graph is assigned to more than one split."""


class EdgeRangeError(DatasetError):
    """An edge endpoint lies outside [0, node_count)."""


class MalformedRecordError(DatasetError):
    """A JSON-lines graph record cannot be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class SyntheticSpecError(DatasetError):
    """Synthetic generator parameters are invalid."""


# ============================================================================
# Configuration, Numeric and Persistence Errors
# ============================================================================

class ConfigError(PRCapsError, ValueError):
    """Run configuration is missing a field or has an invalid value."""


class OutputExistsError(PRCapsError, FileExistsError):
    """Output directory is not empty and --overwrite was not given."""


class DivergenceError(PRCapsError, ArithmeticError):
    """Training produced a non-finite loss or parameter."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class NonFiniteGradientError(PRCapsError, ArithmeticError):
    """A gradient contains NaN or Inf; names the parameter or operation."""

    def __init__(self, message: str, name: Optional[str] = None):
        self.name = name
        super().__init__(f"{message} [{name}]" if name else message)


class CheckpointError(PRCapsError, ValueError):
    """A checkpoint file is unreadable or has the wrong container format."""


class CheckpointMismatchError(ConfigError):
    """A checkpoint's feature or class dimensions disagree with the dataset."""


# ============================================================================
# Error Classification
# ============================================================================

class ErrorCategory:
    """Categories used to pick exit codes and operator hints."""
    CONFIG = "config"
    NUMERIC = "numeric"
    IO = "io"
    UNKNOWN = "unknown"


EXIT_CODES: Dict[str, int] = {
    ErrorCategory.CONFIG: 2,
    ErrorCategory.NUMERIC: 3,
    ErrorCategory.IO: 4,
    ErrorCategory.UNKNOWN: 1,
}


def classify_error(exception: BaseException) -> str:
    """
    Classify an exception into an error category.

    Engine errors are classified by type. Anything else falls back to the
    builtin type it derives from, so an OSError from the filesystem is IO
    and a pydantic validation error (a ValueError) is CONFIG.

    Args:
        exception: The exception to classify

    Returns:
        Error category string
    """
    if isinstance(exception, (DivergenceError, NonFiniteGradientError, GeometryError, RoutingError)):
        return ErrorCategory.NUMERIC

    # Unreadable or missing files; a dataset that reads but fails validation is CONFIG
    if isinstance(exception, (MissingFileError, CheckpointError, OutputExistsError, OSError)):
        return ErrorCategory.IO

    if isinstance(exception, (DatasetError, ConfigError, ValueError, TypeError)):
        return ErrorCategory.CONFIG

    if isinstance(exception, ArithmeticError):
        return ErrorCategory.NUMERIC

    return ErrorCategory.UNKNOWN


def exit_code_for(exception: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    return EXIT_CODES[classify_error(exception)]


def get_error_recovery_suggestions(category: str) -> List[str]:
    """
    Get operator-facing recovery suggestions for an error category.

    Args:
        category: Error category

    Returns:
        List of suggestion strings
    """
    suggestions = {
        ErrorCategory.CONFIG: [
            "Check the field named in the message against docs/file_formats.md",
            "Run with --log-level DEBUG to see the resolved configuration",
        ],
        ErrorCategory.NUMERIC: [
            "Lower training.learning_rate or increase training.weight_decay",
            "Re-run with the same seed and training.detect_anomaly: true to locate the operation",
        ],
        ErrorCategory.IO: [
            "Verify the dataset path and file names (edges.tsv, features.csv, labels.csv, splits.csv)",
            "Pass --overwrite to reuse a non-empty output directory",
        ],
        ErrorCategory.UNKNOWN: [
            "Re-run with --log-level DEBUG and inspect errors.log in the output directory",
        ],
    }

    return suggestions.get(category, suggestions[ErrorCategory.UNKNOWN])


def describe_error(exception: BaseException) -> Dict[str, Any]:
    """Error metadata for structured logs."""
    category = classify_error(exception)
    return {
        "type": type(exception).__name__,
        "category": category,
        "exit_code": EXIT_CODES[category],
        "message": str(exception),
    }
