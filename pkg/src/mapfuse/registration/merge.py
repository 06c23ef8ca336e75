from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from mapfuse.geometry import (
    AnyTransform,
    PointCloud,
    SE3Transform,
    Sim3Transform,
    as_sim3,
    compose,
    compose_all,
    concat_clouds,
    inverse,
    scale_translation,
    transform_points,
)
from mapfuse.scene import AgentTrack

logger = logging.getLogger("mapfuse.registration")
logger.addHandler(logging.NullHandler())

PathLike = Union[str, Path]


def world_cloud(track: AgentTrack) -> PointCloud:
    """Every keyframe cloud of ``track`` in the agent's world frame."""
    return concat_clouds(
        PointCloud(transform_points(kf.pose_local, kf.cloud.points)) for kf in track
    )


def rigid_pose(t: AnyTransform) -> SE3Transform:
    return t if isinstance(t, SE3Transform) else SE3Transform(t.rotation, t.translation)


@dataclass(frozen=True, eq=False)
class MergedMap:
    """Keyframe poses and clouds of several agents in one frame, tagged by agent.

    ``transforms[a]`` maps agent ``a``'s world into the merged frame.
    """

    agents: Tuple[str, ...]
    transforms: Dict[str, Sim3Transform]
    poses: Dict[str, Tuple[SE3Transform, ...]]
    clouds: Dict[str, PointCloud] = field(default_factory=dict)

    @property
    def root(self) -> str:
        return self.agents[0]

    def cloud(self) -> PointCloud:
        return concat_clouds(self.clouds[a] for a in self.agents if a in self.clouds)

    def agent_labels(self) -> NDArray[np.int32]:
        """Per-point index of the owning agent in ``agents``, aligned with ``cloud()``."""
        parts = [
            np.full(len(self.clouds[a]), k, dtype=np.int32)
            for k, a in enumerate(self.agents)
            if a in self.clouds
        ]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int32)

    def positions(self, agent: str) -> NDArray[np.float64]:
        return np.array([p.translation for p in self.poses[agent]]).reshape(-1, 3)

    def all_positions(self) -> NDArray[np.float64]:
        return np.vstack([self.positions(a) for a in self.agents])

    def relative(self, source: str, target: str) -> Sim3Transform:
        """Target world into source world."""
        return as_sim3(compose(inverse(self.transforms[source]), self.transforms[target]))

    def write_ply(self, path: PathLike) -> Path:
        from mapfuse.scene import write_ply

        return write_ply(path, self.cloud(), self.agent_labels())

    def write_tum(self, directory: PathLike, rate_hz: float = 10.0) -> List[Path]:
        from mapfuse.evaluation.tum import write_tum

        directory = Path(directory)
        return [
            write_tum(directory / f"{agent}.tum", self.poses[agent], rate_hz)
            for agent in self.agents
        ]


def target_world_transform(
    source: AgentTrack,
    target: AgentTrack,
    sigma: float,
    final: Sim3Transform,
    anchor: Tuple[int, int],
) -> Sim3Transform:
    """Target world into the merged frame through the anchor keyframes:
    lift_sigma(W_s(i)) * final * W_t(j)^-1."""
    i, j = anchor
    lifted = scale_translation(source[i].pose_local, sigma)
    return as_sim3(compose_all([lifted, final, inverse(target[j].pose_local)]))


def apply_merge(
    source: AgentTrack,
    target: AgentTrack,
    sigma_scaling: Sim3Transform,
    final: Sim3Transform,
    anchor: Tuple[int, int],
    with_clouds: bool = True,
) -> MergedMap:
    """Bring both agents into the source world, scaled into target units."""
    g_t = target_world_transform(source, target, sigma_scaling.scale, final, anchor)
    transforms = {source.agent_id: sigma_scaling, target.agent_id: g_t}
    poses = {
        source.agent_id: tuple(scale_translation(p, sigma_scaling.scale) for p in source.poses),
        target.agent_id: tuple(rigid_pose(compose(g_t, p)) for p in target.poses),
    }
    clouds: Dict[str, PointCloud] = {}
    if with_clouds:
        for track in (source, target):
            world = world_cloud(track)
            clouds[track.agent_id] = PointCloud(
                transform_points(transforms[track.agent_id], world.points)
            )
    logger.info(
        "Merged %s into %s at anchor %s (sigma %.6f)",
        target.agent_id,
        source.agent_id,
        anchor,
        sigma_scaling.scale,
    )
    return MergedMap(
        agents=(source.agent_id, target.agent_id),
        transforms=transforms,
        poses=poses,
        clouds=clouds,
    )


def merge_tracks(
    tracks: Dict[str, AgentTrack],
    transforms: Dict[str, Sim3Transform],
    root: Optional[str] = None,
    with_clouds: bool = True,
) -> MergedMap:
    """Apply per-agent world transforms (e.g. from chained merges) to build one map."""
    agents = sorted(transforms)
    if root is not None:
        agents.remove(root)
        agents.insert(0, root)
    poses = {a: tuple(rigid_pose(compose(transforms[a], p)) for p in tracks[a].poses) for a in agents}
    clouds = (
        {
            a: PointCloud(transform_points(transforms[a], world_cloud(tracks[a]).points))
            for a in agents
        }
        if with_clouds
        else {}
    )
    return MergedMap(tuple(agents), dict(transforms), poses, clouds)
