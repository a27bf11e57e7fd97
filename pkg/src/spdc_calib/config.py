"""Process settings read from the environment."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

from spdc_calib.core.errors import ConfigError

DEFAULT_OUT_DIR = "./spdc-calib-out"

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class Settings:
    """Defaults for the command-line runner; CLI flags take precedence.

    Attributes:
        out_dir: Directory that receives reports and CSV sidecars.
        jobs: Parallel workers for repeated trials.
        log_level: Root log level name.
    """

    out_dir: Path = Path(DEFAULT_OUT_DIR)
    jobs: int = 1
    log_level: str = "INFO"

    @property
    def log_level_value(self) -> int:
        return int(logging.getLevelName(self.log_level))


def load_config() -> Settings:
    """Load settings from environment variables.

    Environment variables:
        SPDC_CALIB_OUT_DIR: Output directory (default ./spdc-calib-out)
        SPDC_CALIB_JOBS: Parallel workers for trials (default 1)
        SPDC_CALIB_LOG_LEVEL: DEBUG, INFO (default), WARNING or ERROR

    Raises:
        ConfigError: If a variable holds an unusable value.
    """
    out_dir = Path(os.environ.get("SPDC_CALIB_OUT_DIR", "") or DEFAULT_OUT_DIR)

    jobs_str = os.environ.get("SPDC_CALIB_JOBS", "1").strip() or "1"
    try:
        jobs = int(jobs_str)
    except ValueError as e:
        raise ConfigError(
            f"SPDC_CALIB_JOBS must be an integer, got '{jobs_str}'",
            details={"path": "SPDC_CALIB_JOBS"},
        ) from e
    if jobs == 0:
        raise ConfigError(
            "SPDC_CALIB_JOBS must not be 0",
            details={"path": "SPDC_CALIB_JOBS"},
            suggestion="Use 1 for serial runs or -1 for all cores",
        )

    level = os.environ.get("SPDC_CALIB_LOG_LEVEL", "INFO").strip().upper() or "INFO"
    if level not in LOG_LEVELS:
        raise ConfigError(
            f"Unknown log level '{level}'",
            details={"path": "SPDC_CALIB_LOG_LEVEL"},
            suggestion=f"Use one of: {', '.join(LOG_LEVELS)}",
        )

    return Settings(out_dir=out_dir, jobs=jobs, log_level=level)
