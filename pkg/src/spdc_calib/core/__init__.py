"""Core components: errors, time base and event records."""

from spdc_calib.core.errors import (
    CalibrationError,
    ConfigError,
    DegenerateFitError,
    InvalidArgumentError,
    OutOfRegimeError,
    ValidationFailedError,
)
from spdc_calib.core.records import Branch, ClickStream, PhotonBatch, Pol, TimeTags
from spdc_calib.core.timebase import (
    PS_PER_SECOND,
    RandomStream,
    TimeArray,
    derive_seed,
    merge_streams,
    poisson_stream,
)

__all__ = [
    "PS_PER_SECOND",
    "Branch",
    "CalibrationError",
    "ClickStream",
    "ConfigError",
    "DegenerateFitError",
    "InvalidArgumentError",
    "OutOfRegimeError",
    "PhotonBatch",
    "Pol",
    "RandomStream",
    "TimeArray",
    "TimeTags",
    "ValidationFailedError",
    "derive_seed",
    "merge_streams",
    "poisson_stream",
]
