"""Simulation and analysis toolkit for partial-information multiple access."""

from .config import SimConfig
from .estimator import (ActiveCountEstimator, ActivityPrior, DecisionRegions, PowerModel,
                        average_error_prob, conditional_error_prob, estimate_active,
                        map_boundaries, practical_thresholds, required_samples,
                        sample_received_power)
from .harness import run, sweep
from .metrics import Metrics
from .scheduler import (ScheduleTable, build_schedule, build_table, frame_efficiency,
                        optimal_slots, success_prob, users_per_slot)
from .validation import ConfigError

__version__ = "0.1.0"

__all__ = [
    "ActiveCountEstimator", "ActivityPrior", "ConfigError", "DecisionRegions", "Metrics",
    "PowerModel", "ScheduleTable", "SimConfig", "average_error_prob", "build_schedule",
    "build_table", "conditional_error_prob", "estimate_active", "frame_efficiency",
    "map_boundaries", "optimal_slots", "practical_thresholds", "required_samples", "run",
    "sample_received_power", "success_prob", "sweep", "users_per_slot",
]
