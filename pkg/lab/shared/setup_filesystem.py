"""
Lab filesystem setup - inject a run directory into the core logger
"""

import sys
from pathlib import Path

# Repository root holds the novikov package
_root = Path(__file__).parent.parent.parent
if str(_root) not in sys.path:
    sys.path.insert(0, str(_root))

from novikov.utils.logger import set_filesystem, set_log_level, set_silent_mode  # noqa: E402
from shared.config import LOG_LEVEL  # noqa: E402
from shared.filesystem import RunFileSystem  # noqa: E402


def setup_run_filesystem(run_dir, silent=False):
    """Create the run directory and route log lines into its log.txt

    Args:
        run_dir: directory for this run (created if missing)
        silent (bool): suppress all logger output (bulk sweeps, --quiet)

    Returns:
        RunFileSystem for the run directory
    """
    filesystem = RunFileSystem(run_dir)
    set_log_level(LOG_LEVEL)
    set_silent_mode(silent)
    set_filesystem(filesystem)
    return filesystem


def detach_filesystem():
    """Stop writing log lines to disk"""
    set_filesystem(None)
