import logging
import sys

import structlog

from .config import LOG_LEVEL


def configure_logging(level=LOG_LEVEL):
    """
    Configures structlog for console output on stderr.

    Args:
        level (str | int): Minimum level name (e.g. "INFO") or numeric level

    Returns:
        None
    """
    if isinstance(level, str):
        numeric = logging.getLevelName(level.upper())
        if not isinstance(numeric, int):
            raise ValueError(f"Unknown log level: {level}")
        level = numeric

    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
