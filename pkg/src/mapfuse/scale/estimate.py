from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from mapfuse.config import Settings, resolve_settings
from mapfuse.exceptions import DegenerateGeometryError, InsufficientMatchesError
from mapfuse.geometry import (
    PointCloud,
    SE3Transform,
    Sim3Transform,
    relative,
    rigid_alignment,
    transform_points,
    umeyama_alignment,
)
from mapfuse.loops import LoopClosure
from mapfuse.scene import Keyframe

from .eight_point import eight_point_relative_pose, project
from .kalman import kalman_scale

logger = logging.getLogger("mapfuse.scale")
logger.addHandler(logging.NullHandler())

MIN_CORRESPONDENCES = 8


@dataclass(frozen=True)
class ScaleParams:
    process_var: float = 0.0
    measurement_var: float = 0.05**2
    initial_delta: float = 5.0
    volume_ratio_threshold: float = 0.5
    condition_limit: float = 1e8
    min_norm_fraction: float = 0.25
    zero_baseline_fallback: bool = True

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None) -> "ScaleParams":
        s = resolve_settings(settings)
        return cls(
            process_var=s["SCALE_PROCESS_VAR"],
            measurement_var=s["SCALE_MEASUREMENT_VAR"],
            initial_delta=s["SCALE_INITIAL_DELTA"],
            volume_ratio_threshold=s["SCALE_VOLUME_RATIO_THRESHOLD"],
            condition_limit=s["SCALE_CONDITION_LIMIT"],
            min_norm_fraction=s["SCALE_MIN_NORM_FRACTION"],
            zero_baseline_fallback=s["SCALE_ZERO_BASELINE_FALLBACK"],
        )


@dataclass(frozen=True)
class ScaleEstimate:
    """Scale and initial guess from one keyframe match at offset ``z_offset``.

    ``sigma_z`` takes source units to target units. ``initial_guess`` maps the target
    landmarks, carried through ``pose_s^-1 * pose_t``, onto the ``sigma_z``-scaled source
    landmarks.
    """

    z_offset: int
    sigma_z: float
    gamma_z: int
    relative_cam: SE3Transform
    initial_guess: Sim3Transform
    source_index: int = 0
    target_index: int = 0
    zero_baseline: bool = False

    def __post_init__(self) -> None:
        if not self.sigma_z > 0:
            raise ValueError(f"sigma_z must be positive, got {self.sigma_z}")

    @property
    def pair(self) -> Tuple[int, int]:
        return self.source_index, self.target_index


def _relative_rotation_only(match: LoopClosure) -> SE3Transform:
    rotation = rigid_alignment(match.target_points, match.source_points).rotation
    return SE3Transform(rotation, np.zeros(3))


def estimate_match_scale(
    match: LoopClosure,
    kf_s: Keyframe,
    kf_t: Keyframe,
    pose_s: Optional[SE3Transform] = None,
    pose_t: Optional[SE3Transform] = None,
    params: Optional[ScaleParams] = None,
    z_offset: int = 0,
) -> ScaleEstimate:
    params = params or ScaleParams()
    pose_s = pose_s if pose_s is not None else kf_s.pose_local
    pose_t = pose_t if pose_t is not None else kf_t.pose_local
    if match.gamma < MIN_CORRESPONDENCES:
        raise InsufficientMatchesError(
            f"{match!r}: scale estimation needs {MIN_CORRESPONDENCES} matches"
        )
    p_s, p_t = match.source_points, match.target_points

    zero_baseline = False
    try:
        relative_cam = eight_point_relative_pose(
            project(p_s), project(p_t), params.condition_limit
        )
    except DegenerateGeometryError:
        if not params.zero_baseline_fallback:
            raise
        logger.warning("Zero baseline at %s; rotation from 3-D landmark alignment", match.pair)
        relative_cam = _relative_rotation_only(match)
        zero_baseline = True

    cs = p_s - p_s.mean(axis=0)
    ct = (p_t - p_t.mean(axis=0)) @ relative_cam.rotation.matrix.T
    norms = np.linalg.norm(cs, axis=1)
    keep = norms >= params.min_norm_fraction * float(np.median(norms))
    if np.count_nonzero(keep) == 0:
        raise DegenerateGeometryError(f"{match!r}: matched landmarks are coincident")
    sigma = kalman_scale(cs[keep], ct[keep], params.process_var, params.measurement_var)

    chained = transform_points(relative(pose_s, pose_t), p_t)
    initial_guess = umeyama_alignment(chained, sigma * p_s, with_scale=True)
    logger.debug(
        "Scale at z=%d %s: sigma=%.6f gamma=%d ig_scale=%.6f",
        z_offset,
        match.pair,
        sigma,
        match.gamma,
        initial_guess.scale,
    )
    return ScaleEstimate(
        z_offset=z_offset,
        sigma_z=sigma,
        gamma_z=match.gamma,
        relative_cam=relative_cam,
        initial_guess=initial_guess,
        source_index=match.source_frame.index,
        target_index=match.target_frame.index,
        zero_baseline=zero_baseline,
    )


def volume_ratio(cloud_a: PointCloud, cloud_b: PointCloud) -> float:
    """Smaller over larger axis-aligned bounding-box volume, in (0, 1]."""
    va, vb = cloud_a.bbox_volume, cloud_b.bbox_volume
    small, large = sorted((va, vb))
    if large == 0.0:
        return 1.0
    if small == 0.0:
        raise DegenerateGeometryError("one cloud has zero bounding-box volume")
    return small / large


def pair_volume_ratio(kf_s: Keyframe, kf_t: Keyframe, sigma: float) -> float:
    """Volume ratio of two keyframe clouds in their world frames, the source scaled by ``sigma``."""
    world_s = PointCloud(sigma * transform_points(kf_s.pose_local, kf_s.cloud.points))
    world_t = PointCloud(transform_points(kf_t.pose_local, kf_t.cloud.points))
    return volume_ratio(world_s, world_t)
