"""Inter-agent scale estimation and optimal scale selection."""

from __future__ import annotations

from .eight_point import (
    decompose_essential,
    eight_point_relative_pose,
    epipolar_residuals,
    essential_matrix,
    project,
)
from .estimate import (
    MIN_CORRESPONDENCES,
    ScaleEstimate,
    ScaleParams,
    estimate_match_scale,
    pair_volume_ratio,
    volume_ratio,
)
from .kalman import ScaleFilter, depth_ratios, kalman_scale
from .selection import (
    PAIR_ORDER,
    ScaleSearchState,
    ScaleSelection,
    SelectionBranch,
    estimate_triple,
    optimal_scale,
    scale_report,
    search_pairs,
    select_scale,
)

__all__ = [
    "MIN_CORRESPONDENCES",
    "PAIR_ORDER",
    "ScaleEstimate",
    "ScaleFilter",
    "ScaleParams",
    "ScaleSearchState",
    "ScaleSelection",
    "SelectionBranch",
    "decompose_essential",
    "depth_ratios",
    "eight_point_relative_pose",
    "epipolar_residuals",
    "essential_matrix",
    "estimate_match_scale",
    "estimate_triple",
    "kalman_scale",
    "optimal_scale",
    "pair_volume_ratio",
    "project",
    "scale_report",
    "search_pairs",
    "select_scale",
    "volume_ratio",
]
