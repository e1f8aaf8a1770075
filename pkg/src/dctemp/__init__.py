"""Inlet-temperature setpoint analytics for data-centre telemetry.

Detect setpoint changes in room telemetry, measure how server and building
power respond, simulate rooms through a fan/chiller/free-cooling model and
search for the setpoint that minimises total power.
"""

from .analysis import (
    AnalysisResult,
    BatchSummary,
    MatchedComparison,
    batch_analysis,
    matched_window_analysis,
    summarize_batch,
    window_analysis,
)
from .changepoint import ChangeEvent, DetectorConfig, detect_changes, summarize_changes
from .optimizer import find_sweet_spot, sweep_temperature
from .physics import PlantConfig, building_power, pue
from .simulator import Scenario, analytic_sensitivity, simulate
from .stats import correlate
from .telemetry import RoomTelemetry, TelemetrySeries, aggregate_room, parse_telemetry_csv, resample

__version__ = "0.1.0"
