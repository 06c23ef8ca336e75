"""Trajectory metrics, TUM files and method comparisons.

``mapfuse.evaluation.experiment`` is imported on demand; it depends on every pipeline stage.
"""

from __future__ import annotations

from .metrics import (
    AlignmentMode,
    ErrorStats,
    MapError,
    TrajectoryMetric,
    align_positions,
    merged_positions_error,
    metric_rmse,
    position_rmse,
    positions_of,
    relative_pose_errors,
    trajectory_extent,
)
from .tum import associate, associated_poses, format_tum, parse_tum, read_tum, write_tum

__all__ = [
    "AlignmentMode",
    "ErrorStats",
    "MapError",
    "TrajectoryMetric",
    "align_positions",
    "associate",
    "associated_poses",
    "format_tum",
    "merged_positions_error",
    "metric_rmse",
    "parse_tum",
    "position_rmse",
    "positions_of",
    "read_tum",
    "relative_pose_errors",
    "trajectory_extent",
    "write_tum",
]
