"""
Logging Configuration
Setup logging for wrcfusion runs with proper formatting and levels.
"""

import logging
import os
import sys
from typing import IO, Any, Mapping, Optional

import colorlog
import orjson

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
QUIET_LOGGERS = ("shapely", "numpy", "PIL", "urllib3")


def setup_logging(level=logging.INFO, log_dir: Optional[str] = None):
    """
    Setup logging configuration for a run.

    Console output goes to stderr so reports on stdout stay clean.

    Args:
        level: Console logging level (default: INFO)
        log_dir: Directory for wrcfusion.log (DEBUG) and wrcfusion_errors.log (ERROR); None disables files
    """
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(colorlog.ColoredFormatter(
        fmt="%(log_color)s" + LOG_FORMAT,
        datefmt=DATE_FORMAT,
        log_colors={
            "DEBUG": "cyan",
            "INFO": "green",
            "WARNING": "yellow",
            "ERROR": "red",
            "CRITICAL": "red,bg_white",
        },
    ))
    console_handler.setLevel(level)

    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()
    root_logger.setLevel(logging.DEBUG)
    root_logger.addHandler(console_handler)

    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)

        error_handler = logging.FileHandler(os.path.join(log_dir, "wrcfusion_errors.log"), encoding="utf-8")
        error_handler.setFormatter(formatter)
        error_handler.setLevel(logging.ERROR)

        file_handler = logging.FileHandler(os.path.join(log_dir, "wrcfusion.log"), encoding="utf-8")
        file_handler.setFormatter(formatter)
        file_handler.setLevel(logging.DEBUG)

        root_logger.addHandler(error_handler)
        root_logger.addHandler(file_handler)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    logger = logging.getLogger(__name__)
    logger.info("Logging system initialized")
    logger.debug("Console logging level: %s", logging.getLevelName(level))
    if log_dir:
        logger.debug("File logging enabled in %s: wrcfusion.log (DEBUG), wrcfusion_errors.log (ERROR)", log_dir)


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance with the specified name.

    Args:
        name: Name for the logger

    Returns:
        logging.Logger: Configured logger instance
    """
    return logging.getLogger(name)


def encode_record(record: Mapping[str, Any]) -> bytes:
    """One JSON object, sorted keys, no trailing newline."""
    return orjson.dumps(dict(record), option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY)


def log_training_step(record: Mapping[str, Any], sink: Optional[IO[bytes]] = None):
    """
    Log one training step as a self-contained JSON line.

    Args:
        record: Step fields, e.g. step, lr, loss, loss_cls, loss_box
        sink: Binary stream the line is also appended to (loss_log.jsonl)
    """
    line = encode_record(record)
    logging.getLogger("training").info(line.decode("utf-8"))
    if sink is not None:
        sink.write(line + b"\n")
        sink.flush()


def log_command_usage(command: str, config_path: Optional[str], success: bool = True):
    """
    Log command usage for run bookkeeping.

    Args:
        command: Command name
        config_path: Config file the command ran with
        success: Whether the command was successful
    """
    logger = logging.getLogger("command_usage")
    status = "SUCCESS" if success else "FAILED"
    logger.info(f"{status} | {command} | {config_path or '<defaults>'}")


def log_error(error: Exception, context: str = ""):
    """
    Log errors with additional context.

    Args:
        error: The exception that occurred
        context: Additional context about where the error occurred
    """
    logger = logging.getLogger("error")
    error_msg = f"ERROR | {type(error).__name__}: {str(error)}"
    if context:
        error_msg += f" | Context: {context}"
    logger.error(error_msg, exc_info=error)
