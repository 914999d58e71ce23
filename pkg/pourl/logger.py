import logging
import queue
import sys
from typing import Optional

LOGGER_NAME = "pourl"
ENV_VAR = "POURL_LOG"
_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}


def configure_logging(level: Optional[str] = None) -> int:
    """Install a single stderr handler on the pourl logger; returns the level used."""
    resolved = _LEVELS.get((level or "WARNING").strip().upper(), logging.WARNING)
    root = logging.getLogger(LOGGER_NAME)
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(resolved)
    root.propagate = False
    return resolved


class Logger:
    """Facade handed to simulator, runner and scenarios.

    Lines go to the stdlib logger; when a queue is given they are mirrored
    into it as well so callers can inspect what happened.
    """

    def __init__(self, log_queue: Optional[queue.Queue] = None, name: str = LOGGER_NAME) -> None:
        self.log_queue = log_queue
        self._logger = logging.getLogger(name)

    def log(self, msg: str, level: int = logging.INFO) -> None:
        self._logger.log(level, msg)
        if self.log_queue is not None:
            self.log_queue.put(f"[{logging.getLevelName(level)}] {msg}")

    def debug(self, msg: str) -> None:
        if self.log_queue is not None or self._logger.isEnabledFor(logging.DEBUG):
            self.log(msg, logging.DEBUG)

    def warning(self, msg: str) -> None:
        self.log(msg, logging.WARNING)

    def error(self, msg: str) -> None:
        self.log(msg, logging.ERROR)
