"""
FFCE Segmenter - Logging Configuration
Root logger on stdout plus structlog key/value events routed through it.
"""

import logging
import sys

import structlog


def configure_logging(level: str = 'INFO') -> None:
    """
    Configure the root logger and structlog.

    Args:
        level: Root logging level name
    """
    # Remove default handlers to avoid duplicates
    root_logger = logging.getLogger()
    root_logger.handlers.clear()

    stdout_handler = logging.StreamHandler(sys.stdout)
    stdout_handler.setLevel(logging.DEBUG)  # Capture all levels

    formatter = logging.Formatter('[%(levelname)s] %(asctime)s - %(name)s - %(message)s')
    stdout_handler.setFormatter(formatter)

    root_logger.setLevel(getattr(logging, level.upper(), logging.INFO))
    root_logger.addHandler(stdout_handler)

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.processors.KeyValueRenderer(key_order=['event'], sort_keys=True),
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
