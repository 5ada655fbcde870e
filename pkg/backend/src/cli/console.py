"""
Console logging setup for the command-line surface.

Library modules only create named loggers; this module installs the single
stderr handler once per process.
"""

import enum
import logging
import sys

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


class LogLevel(enum.Enum):
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"

    @property
    def level(self) -> int:
        return getattr(logging, self.name)

    @classmethod
    def from_verbosity(cls, verbose: int) -> "LogLevel":
        """-v selects info, -vv debug; the default is warning."""
        if verbose >= 2:
            return cls.DEBUG
        if verbose == 1:
            return cls.INFO
        return cls.WARNING


def configure_logging(level: LogLevel = LogLevel.WARNING, stream=None) -> logging.Handler:
    """
    Route all simulator loggers to ``stream`` (stderr by default).

    Calling it again replaces the previously installed handler.
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_parity_console", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._parity_console = True
    root.addHandler(handler)
    root.setLevel(level.level)
    return handler
