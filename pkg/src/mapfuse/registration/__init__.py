"""Scaled alignment, ICP refinement, uncertainty and the merged map."""

from __future__ import annotations

from .chain import AlignmentChain, align_chain, final_transform
from .icp import (
    Correspondences,
    IcpParams,
    IcpResult,
    icp_correspondences,
    icp_point_to_point,
    registration_sane,
)
from .information import (
    InfoParams,
    InformationMatrix,
    cost_hessian,
    cost_mixed,
    icp_cost,
    icp_covariance,
    icp_information_matrix,
    right_perturbation_information,
)
from .merge import (
    MergedMap,
    apply_merge,
    merge_tracks,
    rigid_pose,
    target_world_transform,
    world_cloud,
)
from .pipeline import (
    MergeOutcome,
    PairRegistration,
    Stopwatch,
    merge_pair,
    register_pair,
    resolve_trigger,
)

__all__ = [
    "AlignmentChain",
    "Correspondences",
    "IcpParams",
    "IcpResult",
    "InfoParams",
    "InformationMatrix",
    "MergeOutcome",
    "MergedMap",
    "PairRegistration",
    "Stopwatch",
    "align_chain",
    "apply_merge",
    "cost_hessian",
    "cost_mixed",
    "final_transform",
    "icp_correspondences",
    "icp_cost",
    "icp_covariance",
    "icp_information_matrix",
    "icp_point_to_point",
    "merge_pair",
    "merge_tracks",
    "register_pair",
    "registration_sane",
    "resolve_trigger",
    "right_perturbation_information",
    "rigid_pose",
    "target_world_transform",
    "world_cloud",
]
