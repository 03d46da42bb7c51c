"""Cyclical learning rates, the LR range test, and a small training engine to try them on."""

__version__ = "0.1.0"

from ._accel import backend
from .lr_finder import BoundEstimate, RangeTestConfig, RangeTestTrace, estimate_bounds, rule_of_thumb
from .schedules import (
    PhasedSchedule,
    PolicySpec,
    ScheduleError,
    lr_at,
    lr_series,
    stepsize_suggest,
    reference_phased_schedule,
)

__all__ = [
    "__version__", "backend", "PolicySpec", "PhasedSchedule", "ScheduleError", "lr_at", "lr_series",
    "stepsize_suggest", "reference_phased_schedule", "RangeTestConfig", "RangeTestTrace",
    "BoundEstimate",
    "estimate_bounds", "rule_of_thumb",
]
