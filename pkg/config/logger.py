import logging
import os
import sys
from numbers import Real

from dotenv import load_dotenv

load_dotenv(override=False)


class CustomFormatter(logging.Formatter):
    """Level-colored formatter, adapted from https://stackoverflow.com/a/56944256/3638629"""

    grey = "\x1b[38;21m"
    blue = "\x1b[38;5;39m"
    yellow = "\x1b[38;5;226m"
    red = "\x1b[38;5;196m"
    bold_red = "\x1b[31;1m"
    reset = "\x1b[0m"

    def __init__(self, fmt: str, use_color: bool = True) -> None:
        super().__init__()
        self.fmt = fmt
        colors = {
            logging.DEBUG: self.grey,
            logging.INFO: self.blue,
            logging.WARNING: self.yellow,
            logging.ERROR: self.red,
            logging.CRITICAL: self.bold_red,
        }
        self.FORMATS = {
            level: (color + fmt + self.reset) if use_color else fmt for level, color in colors.items()
        }

    def format(self, record: logging.LogRecord) -> str:
        log_fmt = self.FORMATS.get(record.levelno, self.fmt)
        formatter = logging.Formatter(log_fmt)
        return formatter.format(record)


class CustomFilter(logging.Filter):
    """Fills the per-block context fields used by the log format.

    Callers pass them through `extra={"block": j, "epsilon": eps}`; records
    without them show "-".
    """

    FIELDS = ("block", "epsilon")

    def filter(self, record: logging.LogRecord) -> bool:
        for name in self.FIELDS:
            if not hasattr(record, name) or getattr(record, name) is None:
                setattr(record, name, "-")
        if isinstance(record.epsilon, Real) and not isinstance(record.epsilon, bool):
            record.epsilon = f"{record.epsilon:.1e}"
        return True


LOG_FORMAT = "%(asctime)s - [%(levelname)s] - %(name)s - block=%(block)s eps=%(epsilon)s - %(message)s"


def get_log_level() -> int:
    """Resolve the level from GMSFEM_LOG_LEVEL, falling back to INFO."""
    name = os.getenv("GMSFEM_LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def get_stream_handler() -> logging.StreamHandler:
    stream_handler = logging.StreamHandler()
    stream_handler.setLevel(get_log_level())
    stream_handler.addFilter(CustomFilter())
    stream_handler.setFormatter(CustomFormatter(LOG_FORMAT, use_color=sys.stderr.isatty()))
    return stream_handler


def get_logger(name: str) -> logging.Logger:
    logger = logging.getLogger(name)
    logger.setLevel(get_log_level())
    logger.addFilter(CustomFilter())
    # one handler per named logger, modules may be re-imported by the test runner
    if not logger.handlers:
        logger.addHandler(get_stream_handler())
    return logger
