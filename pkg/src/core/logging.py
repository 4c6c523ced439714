"""
Logging configuration and utilities.
Provides named loggers for frame construction, training, audits and data generation.
"""
import logging
import sys
from typing import Optional

from src.core.config import settings


class LoggerConfig:
    """Logger configuration and setup."""

    _loggers: dict[str, logging.Logger] = {}

    @classmethod
    def setup_logger(
        cls,
        name: str,
        log_file: Optional[str] = None,
        level: Optional[int] = None
    ) -> logging.Logger:
        """
        Set up and return a configured logger.

        Args:
            name: Logger name
            log_file: Optional log file name (stored in settings.LOG_DIR when file logging is on)
            level: Optional logging level

        Returns:
            Configured logger instance
        """
        if name in cls._loggers:
            return cls._loggers[name]

        logger = logging.getLogger(f"lframes.{name}")
        logger.setLevel(level or getattr(logging, settings.LOG_LEVEL))
        logger.handlers = []

        formatter = logging.Formatter(
            settings.LOG_FORMAT,
            datefmt="%Y-%m-%d %H:%M:%S"
        )

        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        if log_file and settings.LOG_TO_FILE:
            settings.LOG_DIR.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(
                settings.LOG_DIR / log_file,
                encoding="utf-8"
            )
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

        logger.propagate = False
        cls._loggers[name] = logger

        return logger


# Pre-configured loggers
frames_logger = LoggerConfig.setup_logger("frames", "frames.log")
train_logger = LoggerConfig.setup_logger("train", "train.log")
audit_logger = LoggerConfig.setup_logger("audit", "audit.log")
data_logger = LoggerConfig.setup_logger("data", "data.log")
error_logger = LoggerConfig.setup_logger("error", "error.log", logging.ERROR)


def log_degeneracy(kind: str, count: int, context: str = "") -> None:
    """Log resolved numerical degeneracies (fallback directions, empty neighborhoods)."""
    if count <= 0:
        return
    frames_logger.debug(f"{kind}: {count} node(s){f' in {context}' if context else ''}")


def log_training_step(step: int, loss: float, lr: float, metric: Optional[float] = None) -> None:
    """Log one training step."""
    train_logger.info(
        f"step {step} - loss {loss:.6f} - lr {lr:.3e}{f' - metric {metric:.4f}' if metric is not None else ''}"
    )


def log_error(error: Exception, context: str = "") -> None:
    """Log errors with full traceback."""
    error_logger.error(
        f"Error{f' in {context}' if context else ''}: {str(error)}",
        exc_info=True
    )
