"""
Loguru sink configuration shared by the CLI and run directories.
"""

import sys
from pathlib import Path
from typing import Optional, Union

from loguru import logger

LOG_FORMAT = (
    "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{extra[component]}</cyan> - {message}"
)

# unbound log calls still need a component for LOG_FORMAT
logger.configure(extra={"component": "main"})


def configure_logging(level: str = "INFO", log_file: Optional[Union[str, Path]] = None) -> None:
    """
    Replace the default sink with stderr at the given level.

    Args:
        level: Minimum level for stderr
        log_file: Optional process-wide log file, rotated at 10 MB
    """
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=LOG_FORMAT)
    if log_file:
        logger.add(str(log_file), rotation="10 MB", level="DEBUG", format=LOG_FORMAT)


def add_run_log(run_dir: Union[str, Path]) -> int:
    """Attach a run.log sink inside a run directory; returns the sink id."""
    return logger.add(str(Path(run_dir) / "run.log"), rotation="10 MB", level="DEBUG", format=LOG_FORMAT)


def remove_run_log(sink_id: int) -> None:
    logger.remove(sink_id)
