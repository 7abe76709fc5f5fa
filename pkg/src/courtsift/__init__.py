"""Reduce basketball player-tracking logs to active play, split it into actions,
and summarize team spacing by phase."""
from .calibration import CalibrationGrid, Recommendation, recommend, sweep
from .filtering import FilterParams, FilterReport, run_filter
from .geometry import CourtSpec, convex_hull_area, load_court_config, mean_pair_distance, speed
from .ingest import (
    GameTimeline,
    RawRecord,
    RecordParseError,
    load_manifest_timeline,
    merge_timeline,
    parse_record_file,
    read_wide,
    write_wide,
)
from .segmentation import ActionSegment, SideConfig, assign_actions, label_phases, summarize_actions
from .stats import compute_frame_metrics, duration_histogram, summarize_by_phase
from .synth import SynthPlan, generate

__version__ = "0.1.0"

__all__ = [
    "ActionSegment", "CalibrationGrid", "CourtSpec", "FilterParams", "FilterReport",
    "GameTimeline", "RawRecord", "Recommendation", "RecordParseError", "SideConfig",
    "SynthPlan", "assign_actions", "compute_frame_metrics", "convex_hull_area",
    "duration_histogram", "generate", "label_phases", "load_court_config",
    "load_manifest_timeline", "mean_pair_distance", "merge_timeline", "parse_record_file",
    "read_wide", "recommend", "run_filter", "speed", "summarize_actions",
    "summarize_by_phase", "sweep", "write_wide",
]
