"""
FFCE Segmenter - Environment Settings
Process-level settings read from environment variables (and a .env file).
"""

import logging
import os
from typing import Any, Dict

import psutil
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

# Load environment variables
load_dotenv()

_LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


def _default_threads() -> int:
    return max(1, psutil.cpu_count(logical=True) or 1)


class SettingsManager:
    """
    Centralized environment settings.

    FFCE_THREADS caps the number of worker threads used for slice-parallel
    inference; FFCE_LOG_LEVEL sets the root logging level.
    """

    def __init__(self):
        """Initialize settings from the environment."""
        self.reload()

    def reload(self) -> None:
        """Re-read every setting from the environment."""
        raw_threads = os.getenv('FFCE_THREADS')
        self._threads = _default_threads()
        if raw_threads:
            try:
                threads = int(raw_threads)
                if threads < 1:
                    raise ValueError(threads)
                self._threads = threads
            except ValueError:
                logger.error(f"Invalid FFCE_THREADS '{raw_threads}' in environment. Falling back to {self._threads}")

        level = os.getenv('FFCE_LOG_LEVEL', 'INFO').upper()
        if level not in _LOG_LEVELS:
            logger.error(f"Invalid FFCE_LOG_LEVEL '{level}' in environment. Falling back to INFO")
            level = 'INFO'
        self._log_level = level

    @property
    def threads(self) -> int:
        """Worker thread cap for concurrent slice evaluation."""
        return self._threads

    @property
    def log_level(self) -> str:
        """Root logging level name."""
        return self._log_level

    def to_dict(self) -> Dict[str, Any]:
        return {'threads': self._threads, 'log_level': self._log_level}


# Global settings instance
settings = SettingsManager()
