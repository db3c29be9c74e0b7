"""Structured logging configuration."""
import logging
import sys
from typing import Optional

import structlog

from core.config import settings


def setup_logging(level: Optional[str] = None, fmt: Optional[str] = None):
    """
    Configure structured logging.

    Log lines go to stderr; stdout is reserved for command output.

    Args:
        level: Log level name, defaults to the configured level
        fmt: "json" or "console", defaults to the configured format
    """
    level = (level or settings.log_level).upper()
    fmt = fmt or settings.log_format

    # Configure standard logging
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level),
    )

    # Configure structlog
    processors = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
    ]

    if fmt == "json":
        processors.append(structlog.processors.JSONRenderer())
    else:
        processors.append(structlog.dev.ConsoleRenderer(colors=False))

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level)),
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def get_logger(name: str):
    """Get a structured logger instance."""
    return structlog.get_logger(name)
