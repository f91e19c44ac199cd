"""
Centralized logging for planefold.

Every call names the component that emitted it ("Tracer", "ReturnMap", ...).
Messages go to the standard logging package and are also kept as LogEntry
records so a run can save its own log next to the report.
"""
import logging
import sys
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import List, Optional

SUCCESS = 25
logging.addLevelName(SUCCESS, "SUCCESS")

_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "SUCCESS": SUCCESS,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}


@dataclass
class LogEntry:
    """One recorded message."""
    timestamp: datetime
    level: str
    source: str
    message: str

    def format(self) -> str:
        ts = self.timestamp.strftime("%H:%M:%S.%f")[:-3]
        return f"[{ts}] [{self.level}] [{self.source}] {self.message}"


class AppLogger:
    """
    Source-tagged logger shared by the library and the CLI.

    The console handler is attached once per process, at INFO unless
    `set_verbose` is called; `set_file_log` adds a DEBUG file handler.
    Recording is thread-safe so pool workers can log concurrently.
    """

    def __init__(self, name: str = "planefold"):
        self.name = name
        self.entries: List[LogEntry] = []
        self._lock = threading.Lock()
        self._file_handler: Optional[logging.FileHandler] = None
        self._logger = logging.getLogger(name)
        self._logger.setLevel(logging.DEBUG)
        self._logger.propagate = False
        self._console = self._console_handler()

    def _console_handler(self) -> logging.Handler:
        for handler in self._logger.handlers:
            if getattr(handler, "_planefold_console", False):
                return handler
        handler = logging.StreamHandler(sys.stderr)
        handler.setLevel(logging.INFO)
        handler.setFormatter(logging.Formatter('%(asctime)s [%(levelname)s] %(message)s', datefmt='%H:%M:%S'))
        handler._planefold_console = True
        self._logger.addHandler(handler)
        return handler

    def set_verbose(self, verbose: bool) -> None:
        """Show DEBUG messages on the console."""
        self._console.setLevel(logging.DEBUG if verbose else logging.INFO)

    def set_file_log(self, path: Path) -> None:
        """Also write every message, DEBUG included, to `path`."""
        if self._file_handler is not None:
            self._logger.removeHandler(self._file_handler)
            self._file_handler.close()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._file_handler = logging.FileHandler(path, encoding='utf-8')
        self._file_handler.setLevel(logging.DEBUG)
        self._file_handler.setFormatter(logging.Formatter('%(asctime)s [%(levelname)s] %(message)s'))
        self._logger.addHandler(self._file_handler)

    def log(self, level: str, source: str, message: str) -> None:
        """Record and emit one message; `level` is a key of _LEVELS."""
        entry = LogEntry(datetime.now(), level, source, message)
        with self._lock:
            self.entries.append(entry)
        self._logger.log(_LEVELS[level], f"[{source}] {message}")

    def _dispatch(self, level: str, source_or_message: str, message: Optional[str]) -> None:
        if message is None:
            self.log(level, "App", source_or_message)
        else:
            self.log(level, source_or_message, message)

    # Each level accepts (source, message) or just (message).
    def debug(self, source_or_message: str, message: Optional[str] = None) -> None:
        self._dispatch("DEBUG", source_or_message, message)

    def info(self, source_or_message: str, message: Optional[str] = None) -> None:
        self._dispatch("INFO", source_or_message, message)

    def success(self, source_or_message: str, message: Optional[str] = None) -> None:
        self._dispatch("SUCCESS", source_or_message, message)

    def warning(self, source_or_message: str, message: Optional[str] = None) -> None:
        self._dispatch("WARNING", source_or_message, message)

    def error(self, source_or_message: str, message: Optional[str] = None) -> None:
        self._dispatch("ERROR", source_or_message, message)

    def get_entries(self, source: Optional[str] = None, level: Optional[str] = None) -> List[LogEntry]:
        """Recorded entries, optionally only those of one source and/or level."""
        with self._lock:
            return [e for e in self.entries
                    if (source is None or e.source == source) and (level is None or e.level == level)]

    def clear(self) -> None:
        with self._lock:
            self.entries.clear()


_logger: Optional[AppLogger] = None
_logger_lock = threading.Lock()


def get_logger() -> AppLogger:
    """Process-wide logger."""
    global _logger
    with _logger_lock:
        if _logger is None:
            _logger = AppLogger()
        return _logger
