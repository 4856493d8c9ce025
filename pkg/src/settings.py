"""
Runtime settings read from the environment (and an optional .env file).
"""

import os
import logging

# Load environment variables from .env file
try:
    from dotenv import load_dotenv

    load_dotenv()
except ImportError:
    pass  # dotenv not available, use system environment
except Exception:
    pass  # error loading .env file, use system environment

from src.monitoring.resources import physical_cpu_count

logger = logging.getLogger(__name__)

WORKERS_ENV = "SWARMPERF_WORKERS"
LOG_LEVEL_ENV = "SWARMPERF_LOG_LEVEL"
OUTPUT_DIR_ENV = "SWARMPERF_OUTPUT_DIR"

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def default_workers() -> int:
    """Worker count from SWARMPERF_WORKERS, else the physical CPU count."""
    raw = os.getenv(WORKERS_ENV)
    if raw:
        try:
            value = int(raw)
            if value >= 1:
                return value
        except ValueError:
            pass
        logger.warning(f"Ignoring invalid {WORKERS_ENV}={raw!r}")
    return physical_cpu_count()


def log_level() -> str:
    return os.getenv(LOG_LEVEL_ENV, "INFO").upper()


def default_output_dir() -> str:
    return os.getenv(OUTPUT_DIR_ENV, os.path.join(os.getcwd(), "output"))


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(level=level or log_level(), format=LOG_FORMAT)
