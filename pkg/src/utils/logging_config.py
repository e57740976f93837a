"""
Logging Configuration for Training and Ablation Runs

This module sets up process-wide logging once per CLI command: a console
handler for the operator, rotating run/error logs inside the output
directory, a JSON performance log with memory usage, and a structured
event logger for the run lifecycle.

Educational Note:
Long numerical jobs are debugged after the fact. Good run logs help with:
- Reconstructing which configuration produced a result
- Spotting slow epochs and memory growth
- Locating the epoch where a run diverged

Events emitted by the engine:
    run_started, epoch_completed, checkpoint_saved,
    ablation_cell_completed, divergence
"""

import json
import logging
import os
import sys
import time
from datetime import datetime
from functools import wraps
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, Optional, Union

import psutil

# ============================================================================
# Logging Configuration
# ============================================================================

class LogConfig:
    """Centralized logging configuration."""
    # Log file names (created inside the run's output directory)
    RUN_LOG_FILE = "run.log"
    ERROR_LOG_FILE = "errors.log"
    PERFORMANCE_LOG_FILE = "performance.log"

    # Log format
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    DETAILED_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s'

    # Operations slower than this are flagged (milliseconds)
    SLOW_OPERATION_THRESHOLD = 60_000

    # Log rotation settings
    MAX_BYTES = 10 * 1024 * 1024  # 10 MB
    BACKUP_COUNT = 5

    # Environment variable overriding the default level
    LEVEL_ENV_VAR = "PRCAPS_LOG_LEVEL"


def resolve_log_level(level: Union[int, str, None] = None) -> int:
    """
    Turn a level name, number or None into a logging level.

    None reads PRCAPS_LOG_LEVEL and falls back to INFO.
    """
    if level is None:
        level = os.environ.get(LogConfig.LEVEL_ENV_VAR, "INFO")
    if isinstance(level, int):
        return level
    resolved = logging.getLevelName(str(level).upper())
    if not isinstance(resolved, int):
        raise ValueError(f"Unknown log level: {level}")
    return resolved


# ============================================================================
# Logger Setup
# ============================================================================

def setup_logging(
    log_level: Union[int, str, None] = None,
    log_dir: Optional[Path] = None,
    enable_file_logging: bool = True,
    enable_console_logging: bool = True
) -> logging.Logger:
    """
    Set up logging for one CLI command.

    Educational Note:
    The console handler writes to stderr so stdout stays reserved for the
    one-line command summaries that scripts parse. File handlers are only
    installed when the command has an output directory to put them in.

    Args:
        log_level: Level name or number (default from PRCAPS_LOG_LEVEL)
        log_dir: Directory for run.log and errors.log
        enable_file_logging: Whether to log to files
        enable_console_logging: Whether to log to console

    Returns:
        Configured root logger
    """
    level = resolve_log_level(log_level)

    logger = logging.getLogger()
    logger.setLevel(level)

    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    if enable_console_logging:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(logging.Formatter(LogConfig.LOG_FORMAT))
        logger.addHandler(console_handler)

    if enable_file_logging and log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)

        run_handler = RotatingFileHandler(
            log_dir / LogConfig.RUN_LOG_FILE,
            maxBytes=LogConfig.MAX_BYTES,
            backupCount=LogConfig.BACKUP_COUNT
        )
        run_handler.setLevel(level)
        run_handler.setFormatter(logging.Formatter(LogConfig.DETAILED_FORMAT))
        logger.addHandler(run_handler)

        # Errors only
        error_handler = RotatingFileHandler(
            log_dir / LogConfig.ERROR_LOG_FILE,
            maxBytes=LogConfig.MAX_BYTES,
            backupCount=LogConfig.BACKUP_COUNT
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(logging.Formatter(LogConfig.DETAILED_FORMAT))
        logger.addHandler(error_handler)

        PerformanceLogger.attach_file(log_dir / LogConfig.PERFORMANCE_LOG_FILE)

    logger.debug("Logging initialized at level %s", logging.getLevelName(level))
    return logger


def close_file_logging() -> None:
    """
    Close every run-directory log file setup_logging opened.

    Console handlers stay in place. Called when a command finishes so the
    next command in the same process does not write into this run's files.
    """
    PerformanceLogger.detach_file()
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RotatingFileHandler):
            handler.close()
            root.removeHandler(handler)


# ============================================================================
# Performance Logging
# ============================================================================

def resident_memory_mb() -> float:
    """Resident set size of this process in megabytes."""
    return psutil.Process(os.getpid()).memory_info().rss / (1024 * 1024)


class PerformanceLogger:
    """
    Logger for timings of epochs, commands and ablation cells.

    Entries are JSON lines in performance.log when a run directory is
    configured, otherwise they only reach the root handlers at DEBUG.
    """

    LOGGER_NAME = "prcaps.performance"

    def __init__(self, logger_name: str = LOGGER_NAME):
        self.logger = logging.getLogger(logger_name)

    @classmethod
    def attach_file(cls, path: Path) -> None:
        """Route performance entries to a dedicated rotating file."""
        cls.detach_file()
        perf_logger = logging.getLogger(cls.LOGGER_NAME)
        handler = RotatingFileHandler(
            path,
            maxBytes=LogConfig.MAX_BYTES,
            backupCount=LogConfig.BACKUP_COUNT
        )
        handler.setFormatter(logging.Formatter('%(message)s'))
        perf_logger.addHandler(handler)
        perf_logger.setLevel(logging.INFO)
        perf_logger.propagate = False

    @classmethod
    def detach_file(cls) -> None:
        """Close the performance file; entries propagate to the root logger again."""
        perf_logger = logging.getLogger(cls.LOGGER_NAME)
        for handler in list(perf_logger.handlers):
            handler.close()
            perf_logger.removeHandler(handler)
        perf_logger.propagate = True

    def log_operation(
        self,
        operation: str,
        duration_ms: float,
        metadata: Optional[Dict[str, Any]] = None,
        include_memory: bool = False
    ):
        """
        Log a timed operation.

        Args:
            operation: Operation description
            duration_ms: Operation duration in milliseconds
            metadata: Additional metadata
            include_memory: Attach resident memory in MB
        """
        entry = {
            'timestamp': datetime.now().isoformat(),
            'operation': operation,
            'duration_ms': round(duration_ms, 2),
            'metadata': metadata or {}
        }
        if include_memory:
            entry['rss_mb'] = round(resident_memory_mb(), 1)

        self.logger.info(json.dumps(entry))

        if duration_ms > LogConfig.SLOW_OPERATION_THRESHOLD:
            logging.getLogger(__name__).warning(
                f"Slow operation: {operation} took {duration_ms:.2f}ms"
            )


def log_performance(operation_name: Optional[str] = None):
    """
    Decorator to log how long a function takes.

    Args:
        operation_name: Custom operation name (defaults to function name)

    Example:
        @log_performance("cmd_train")
        def cmd_train(args):
            ...
    """
    perf_logger = PerformanceLogger()

    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            op_name = operation_name or func.__name__

            start_time = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                duration_ms = (time.perf_counter() - start_time) * 1000
                perf_logger.log_operation(op_name, duration_ms, {'error': str(e)})
                raise

            duration_ms = (time.perf_counter() - start_time) * 1000
            perf_logger.log_operation(op_name, duration_ms, include_memory=True)
            return result

        return wrapper
    return decorator


# ============================================================================
# Structured Logging
# ============================================================================

class StructuredLogger:
    """
    Logger for run lifecycle events as JSON objects.

    Educational Note:
    One JSON object per event means a run can be summarized later with a
    few lines of pandas instead of regular expressions over free text.
    """

    def __init__(self, logger_name: str = "prcaps.events"):
        self.logger = logging.getLogger(logger_name)

    def log_event(
        self,
        event_type: str,
        level: int = logging.INFO,
        **kwargs
    ):
        """
        Log a structured event.

        Args:
            event_type: Type of event
            level: Log level
            **kwargs: Event metadata (must be JSON serializable)
        """
        event = {
            'timestamp': datetime.now().isoformat(),
            'event_type': event_type,
            **kwargs
        }

        self.logger.log(level, json.dumps(event, default=str))
