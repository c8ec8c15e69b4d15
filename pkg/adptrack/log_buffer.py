"""
In-memory log buffer so each simulation run can persist its own log.

Uses a custom logging.Handler that appends to a thread-safe bounded deque;
simulate clears it before a run and writes it to <out>/run.log after.
"""
import logging
import pathlib
import threading
from collections import deque
from typing import Optional


_LOG_FORMAT = "%(asctime)s [%(name)s] %(levelname)s %(message)s"
_formatter = logging.Formatter(_LOG_FORMAT)

_buffer: Optional[deque] = None
_lock = threading.Lock()
_handler: Optional["LogBufferHandler"] = None


class LogBufferHandler(logging.Handler):
    """Appends formatted lines to a bounded, thread-safe deque."""

    def __init__(self, buffer: deque):
        super().__init__()
        self._buffer = buffer

    def emit(self, record: logging.LogRecord) -> None:
        try:
            entry = self.format(record)
            with _lock:
                self._buffer.append(entry)
        except Exception:
            self.handleError(record)


def install_log_handler(capacity: int = 5000) -> None:
    """Create the buffer and handler, attach to the adptrack logger."""
    global _buffer, _handler
    with _lock:
        if _handler is not None:
            return
        _buffer = deque(maxlen=capacity)
        _handler = LogBufferHandler(_buffer)
        _handler.setFormatter(_formatter)
    logging.getLogger("adptrack").addHandler(_handler)


def clear() -> None:
    with _lock:
        if _buffer is not None:
            _buffer.clear()


def write_run_log(path: pathlib.Path) -> int:
    """Write everything captured since the last clear(); returns the line count."""
    with _lock:
        lines = list(_buffer) if _buffer is not None else []
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return len(lines)
