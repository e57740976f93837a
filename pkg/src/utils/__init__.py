"""
Shared utilities: error hierarchy, logging setup and seed streams.
"""

from src.utils.errors import (
    EXIT_CODES,
    CheckpointError,
    CheckpointMismatchError,
    ConfigError,
    CutLocusError,
    DatasetError,
    DimensionMismatchError,
    DivergenceError,
    EdgeRangeError,
    ErrorCategory,
    GeometryError,
    LabelRangeError,
    MalformedRecordError,
    ManifoldMembershipError,
    MissingFileError,
    NonFiniteGradientError,
    OutputExistsError,
    OverlappingMasksError,
    PRCapsError,
    PsiUndefinedError,
    RaggedRowsError,
    RoutingError,
    SyntheticSpecError,
    classify_error,
    describe_error,
    exit_code_for,
    get_error_recovery_suggestions,
)
from src.utils.logging_config import (
    LogConfig,
    PerformanceLogger,
    StructuredLogger,
    close_file_logging,
    log_performance,
    resident_memory_mb,
    setup_logging,
)
from src.utils.seeding import STREAMS, derive_seed, numpy_rng, torch_generator

__all__ = [
    # Errors
    'PRCapsError',
    'GeometryError',
    'DimensionMismatchError',
    'ManifoldMembershipError',
    'PsiUndefinedError',
    'CutLocusError',
    'RoutingError',
    'DatasetError',
    'MissingFileError',
    'RaggedRowsError',
    'LabelRangeError',
    'OverlappingMasksError',
    'EdgeRangeError',
    'MalformedRecordError',
    'SyntheticSpecError',
    'ConfigError',
    'OutputExistsError',
    'DivergenceError',
    'NonFiniteGradientError',
    'CheckpointError',
    'CheckpointMismatchError',
    'ErrorCategory',
    'EXIT_CODES',
    'classify_error',
    'exit_code_for',
    'describe_error',
    'get_error_recovery_suggestions',
    # Logging
    'LogConfig',
    'setup_logging',
    'PerformanceLogger',
    'StructuredLogger',
    'close_file_logging',
    'log_performance',
    'resident_memory_mb',
    # Seeding
    'STREAMS',
    'derive_seed',
    'torch_generator',
    'numpy_rng',
]
