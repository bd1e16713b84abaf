"""
RLDDU Structured Logging Configuration
Configures structlog for consistent logging across solvers, trainer and CLI.
Adds per-run log files under <out_dir>/logs.
"""

import logging
import os
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import structlog
from structlog.processors import JSONRenderer


def configure_logging(
    log_level: str | None = None,
    json_format: bool | None = None
) -> None:
    """
    Configure structlog for RLDDU.

    Args:
        log_level: Log level (DEBUG, INFO, WARNING, ERROR). Defaults to RLDDU_LOG_LEVEL or WARNING
        json_format: Whether to use JSON output. Defaults to RLDDU_ENV == "production"
    """
    if log_level is None:
        log_level = os.getenv("RLDDU_LOG_LEVEL", "WARNING").upper()

    if json_format is None:
        json_format = os.getenv("RLDDU_ENV", "development").lower() == "production"

    processors = [
        structlog.processors.add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.contextvars.merge_contextvars,
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
    ]

    if json_format:
        processors.append(JSONRenderer())
    else:
        processors.append(structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty()))

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelName(log_level.upper())
        ),
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


@contextmanager
def run_logging(run_id: str, out_dir: Path) -> Iterator[structlog.BoundLogger]:
    """
    Per-run logging to <out_dir>/logs/run_{run_id}.log (JSON lines).

    On exit the file is closed and run_id is unbound from the contextvars,
    also when the run raises.

    Args:
        run_id: Unique run identifier
        out_dir: Experiment output directory

    Yields:
        Logger bound to the run context
    """
    logs_dir = Path(out_dir) / "logs"
    logs_dir.mkdir(parents=True, exist_ok=True)

    log_file = (logs_dir / f"run_{run_id}.log").open("a", encoding="utf-8")
    structlog.contextvars.bind_contextvars(run_id=run_id)
    try:
        yield structlog.wrap_logger(
            structlog.WriteLogger(log_file),
            processors=[
                structlog.processors.add_log_level,
                structlog.processors.TimeStamper(fmt="iso"),
                structlog.contextvars.merge_contextvars,
                structlog.processors.format_exc_info,
                JSONRenderer(),
            ],
        ).bind(run_id=run_id)
    finally:
        structlog.contextvars.unbind_contextvars("run_id")
        log_file.close()


def get_logger(name: str | None = None, **initial_context) -> structlog.BoundLogger:
    """
    Get a configured logger instance.

    Args:
        name: Logger name (typically the module name)
        **initial_context: Initial context to bind to the logger

    Returns:
        Configured structlog logger
    """
    logger = structlog.get_logger(name)
    if initial_context:
        logger = logger.bind(**initial_context)
    return logger


# Initialize logging on module import
configure_logging()
