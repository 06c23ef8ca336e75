"""Rotations, rigid and similarity transforms, point clouds and closed-form alignment."""

from __future__ import annotations

from .alignment import rigid_alignment, umeyama_alignment
from .cloud import PointCloud, concat_clouds
from .rotation import Rotation, project_to_so3, skew
from .transforms import (
    WORLD_INDEX,
    AnyTransform,
    FrameId,
    SE3Transform,
    Sim3Transform,
    as_sim3,
    compose,
    compose_all,
    inverse,
    relative,
    scale_translation,
    transform_cloud,
    transform_point,
    transform_points,
)

__all__ = [
    "WORLD_INDEX",
    "AnyTransform",
    "FrameId",
    "PointCloud",
    "Rotation",
    "SE3Transform",
    "Sim3Transform",
    "as_sim3",
    "compose",
    "compose_all",
    "concat_clouds",
    "inverse",
    "project_to_so3",
    "relative",
    "rigid_alignment",
    "scale_translation",
    "skew",
    "transform_cloud",
    "transform_point",
    "transform_points",
    "umeyama_alignment",
]
