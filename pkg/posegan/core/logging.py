"""Logging setup"""
import logging
import sys
from typing import Optional

from posegan.core.config import settings


def setup_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once for CLI and script entry points"""
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format=settings.LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )
    # PIL logs every PNG chunk at DEBUG
    logging.getLogger("PIL").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
