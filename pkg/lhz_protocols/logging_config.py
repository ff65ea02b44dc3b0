"""
Logging configuration for the LHZ protocol workbench.

Provides structured logging with pipeline-stage context.
"""

import logging
import sys
from typing import Optional


class StageContextFilter(logging.Filter):
    """Add pipeline stage context to log records."""

    def __init__(self, stage: str):
        super().__init__()
        self.stage = stage

    def filter(self, record: logging.LogRecord) -> bool:
        record.stage = self.stage
        return True


def setup_logging(stage: str, debug: bool = False, log_file: Optional[str] = None) -> None:
    """
    Configure logging for a pipeline run.

    Console output carries no timestamps; the optional sidecar file does,
    so artifacts and stdout stay reproducible across reruns.

    Args:
        stage: Pipeline stage name for log context
        debug: Enable debug level logging
        log_file: Optional path of the sidecar run log
    """
    level = logging.DEBUG if debug else logging.INFO

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in root_logger.handlers:
        handler.close()
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter(
        '[%(levelname)s] [stage=%(stage)s] %(message)s'
    ))
    console_handler.addFilter(StageContextFilter(stage))
    root_logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(level)
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s [%(levelname)s] [stage=%(stage)s] %(name)s: %(message)s'
        ))
        file_handler.addFilter(StageContextFilter(stage))
        root_logger.addHandler(file_handler)


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance.

    Args:
        name: Logger name (usually __name__)

    Returns:
        Logger instance
    """
    return logging.getLogger(name)
