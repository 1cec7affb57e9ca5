"""
Command handling utilities shared by every wrcfusion command.
"""
import functools
import sys
from typing import IO, Optional, Union

from utils.logging_config import get_logger, log_error
from wrcfusion.errors import ConfigurationError, WRCFusionError

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def handle_command_error(func):
    """
    Decorator turning a command body into an exit code.

    Known errors are logged with their traceback and summarized on stderr;
    configuration errors exit with 2, everything else with 1.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            result = func(*args, **kwargs)
            return EXIT_OK if result is None else int(result)
        except ConfigurationError as e:
            log_error(e, context=func.__name__)
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        except (WRCFusionError, OSError) as e:
            log_error(e, context=func.__name__)
            print(f"error: {e}", file=sys.stderr)
            return EXIT_FAILURE
        except Exception as e:
            log_error(e, context=f"unexpected failure in {func.__name__}")
            print(f"error: unexpected {type(e).__name__}: {e}", file=sys.stderr)
            return EXIT_FAILURE

    return wrapper


def send_response(content: Union[str, bytes], stream: Optional[IO] = None):
    """
    Write command output (reports, JSON) to the output stream.

    Args:
        content: Text or UTF-8 bytes; a trailing newline is added if missing
        stream: Destination (default: stdout)
    """
    stream = stream or sys.stdout
    if isinstance(content, bytes):
        content = content.decode("utf-8")
    if not content.endswith("\n"):
        content += "\n"
    try:
        stream.write(content)
        stream.flush()
    except OSError as e:
        logger.error(f"Error in send_response: {e}")
