import logging
import os
import sys

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
_handler = None


def configure_logging(level=None):
    """
    Configure the package root logger. Output goes to stderr so reports on
    stdout are unaffected.

    Args:
        level: logging level name or number; defaults to $XCELRAM_LOG_LEVEL or WARNING
    """
    global _handler
    if level is None:
        level = os.environ.get("XCELRAM_LOG_LEVEL", "WARNING")
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.WARNING

    root = logging.getLogger("xcelram")
    if _handler is None:
        _handler = logging.StreamHandler(sys.stderr)
        _handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(_handler)
        root.propagate = False
    else:
        # sys.stderr may have been swapped since the last call
        _handler.stream = sys.stderr
    root.setLevel(level)
    return root


def get_logger(name: str) -> logging.Logger:
    if _handler is None:
        configure_logging()
    return logging.getLogger(f"xcelram.{name}")
