"""
Logging module for the peakon lab
Accepts an injected filesystem so a run directory can keep its own log.txt
Always prints to console unless silent mode is on
"""

import time

from novikov.config import LOG_LEVEL

# Global logging configuration
_filesystem = None
_silent_mode = False  # When True, suppress all output
_log_level = LOG_LEVEL
_started = time.monotonic()
LOG_FILENAME = "log.txt"
MAX_LOG_LINES = 100000

_LEVELS = {"DEBUG": 10, "INFO": 20, "ERROR": 40}


def set_filesystem(filesystem):
    """Set the filesystem to use for logging (dependency injection)"""
    global _filesystem
    _filesystem = filesystem


def set_log_level(level):
    """Set the logging level

    Args:
        level: "DEBUG", "INFO" or "ERROR" (unknown names fall back to INFO)
    """
    global _log_level
    level = level.upper() if level else "INFO"
    _log_level = level if level in _LEVELS else "INFO"


def _enabled(level):
    return _LEVELS[level] >= _LEVELS[_log_level]


def _filesystem_available():
    return _filesystem is not None and _filesystem.is_available()


def _get_timestamp():
    """Elapsed time since the logger was imported, e.g. [2m05.10s]"""
    elapsed = time.monotonic() - _started
    hours = int(elapsed // 3600)
    minutes = int((elapsed % 3600) // 60)
    seconds = elapsed % 60

    if hours > 0:
        return f"[{hours}h{minutes:02d}m{seconds:05.2f}s]"
    if minutes > 0:
        return f"[{minutes}m{seconds:05.2f}s]"
    return f"[{seconds:.2f}s]"


def _write_to_filesystem(message):
    if not _filesystem_available():
        return False

    try:
        return _filesystem.append_text(LOG_FILENAME, message)
    except Exception as e:
        # don't recurse through log_error here
        if not _silent_mode:
            print(f"Filesystem log write failed: {e}")
        return False


def _truncate_log_if_needed():
    """Keep the last 80% of MAX_LOG_LINES once the file grows past it"""
    if not _filesystem_available():
        return

    try:
        line_count = _filesystem.count_lines(LOG_FILENAME)
        if line_count <= MAX_LOG_LINES:
            return

        keep_lines = int(MAX_LOG_LINES * 0.8)
        if _filesystem.truncate_file(LOG_FILENAME, keep_lines):
            _filesystem.append_text(
                LOG_FILENAME,
                f"{_get_timestamp()} LOG: Truncated from {line_count} to {keep_lines} lines",
            )
        elif not _silent_mode:
            print("Log truncation failed")
    except Exception as e:
        if not _silent_mode:
            print(f"Log truncation failed: {e}")


def _emit(message):
    print(message)
    if _write_to_filesystem(message) and int(time.monotonic()) % 100 == 0:
        _truncate_log_if_needed()


def log(message):
    """Main logging function

    Args:
        message: String message to log
    """
    if _silent_mode or not _enabled("INFO"):
        return
    _emit(f"{_get_timestamp()} {message}")


def log_debug(message):
    """Log a DEBUG line (solver internals, per-iteration detail)"""
    if _silent_mode or not _enabled("DEBUG"):
        return
    _emit(f"{_get_timestamp()} DEBUG: {message}")


def log_error(message):
    """Log error message with ERROR prefix - always logs regardless of level

    Args:
        message: Error message to log
    """
    if _silent_mode:
        return
    _emit(f"{_get_timestamp()} ERROR: {message}")


def set_silent_mode(silent):
    """Enable or disable silent mode

    Args:
        silent (bool): If True, suppress all logger output
    """
    global _silent_mode
    _silent_mode = bool(silent)
