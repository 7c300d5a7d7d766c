"""Distributed spectrum sensing and airtime-utilization analysis pipeline."""

from .model import (
    AURecord,
    CalibrationTable,
    ChannelGrid,
    GateViolationError,
    MinuteManifest,
    SiteParams,
    Sweep,
    ThresholdSpec,
    apply_calibration,
    build_channel_grid,
    compute_au,
    scale_threshold,
    sweep_occupancy,
)
from .aggregate import GRAPH_TYPES, SeriesResult, aggregate_series
from .sim import BandProfile, Environment, expected_au, generate_sweep, replay_source

__version__ = "0.1.0"

__all__ = [
    "AURecord",
    "BandProfile",
    "CalibrationTable",
    "ChannelGrid",
    "Environment",
    "GRAPH_TYPES",
    "GateViolationError",
    "MinuteManifest",
    "SeriesResult",
    "SiteParams",
    "Sweep",
    "ThresholdSpec",
    "aggregate_series",
    "apply_calibration",
    "build_channel_grid",
    "compute_au",
    "expected_au",
    "generate_sweep",
    "replay_source",
    "scale_threshold",
    "sweep_occupancy",
    "__version__",
]
