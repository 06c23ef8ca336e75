from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from mapfuse.exceptions import InvalidTransformError, ScenarioError
from mapfuse.geometry import FrameId, PointCloud, SE3Transform, Sim3Transform, as_sim3, compose


class ScenarioState(str, Enum):
    """The four two-agent encounter states, keyed by their CLI letter."""

    SameDirManyLC = "a"
    SameDirSingleLC = "b"
    OppositeDirManyLC = "c"
    OppositeDirSingleLC = "d"

    @property
    def opposite(self) -> bool:
        return self in (ScenarioState.OppositeDirManyLC, ScenarioState.OppositeDirSingleLC)

    @property
    def many_loop_closures(self) -> bool:
        return self in (ScenarioState.SameDirManyLC, ScenarioState.OppositeDirManyLC)

    @classmethod
    def parse(cls, text: str) -> "ScenarioState":
        for state in cls:
            if text in (state.value, state.name):
                return state
        raise ScenarioError(f"unknown scenario state {text!r}")


class LandmarkObservation(NamedTuple):
    landmark_id: int
    position: NDArray[np.float64]
    descriptor: NDArray[np.float64]


def _frozen(a: object, dtype: type) -> NDArray:  # type: ignore[type-arg]
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Keyframe:
    """One keyframe: its pose in the agent's own world, landmark observations, local cloud.

    Observation positions and the cloud are in the camera frame, in the agent's units.
    """

    frame: FrameId
    pose_local: SE3Transform
    landmark_ids: NDArray[np.int64]
    positions: NDArray[np.float64]
    descriptors: NDArray[np.float64]
    cloud: PointCloud = field(default_factory=PointCloud.empty)

    def __post_init__(self) -> None:
        ids = _frozen(self.landmark_ids, np.int64).reshape(-1)
        pos = _frozen(np.asarray(self.positions, dtype=float).reshape(-1, 3), float)
        desc = np.asarray(self.descriptors, dtype=float)
        if desc.ndim != 2:
            desc = desc.reshape(ids.size, -1) if ids.size else desc.reshape(0, 0)
        desc = _frozen(desc, float)
        if not (ids.shape[0] == pos.shape[0] == desc.shape[0]):
            raise InvalidTransformError("landmark ids, positions and descriptors differ in length")
        if pos.shape[0] and np.any(pos[:, 2] <= 0.0):
            raise InvalidTransformError(f"{self.frame}: observed landmark with non-positive depth")
        object.__setattr__(self, "landmark_ids", ids)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "descriptors", desc)

    @property
    def index(self) -> int:
        return self.frame.index

    @property
    def agent(self) -> str:
        return self.frame.agent

    @property
    def descriptor_length(self) -> int:
        return int(self.descriptors.shape[1]) if self.descriptors.ndim == 2 else 0

    def __len__(self) -> int:
        return int(self.landmark_ids.shape[0])

    @property
    def observations(self) -> List[LandmarkObservation]:
        return [
            LandmarkObservation(int(i), p, d)
            for i, p, d in zip(self.landmark_ids, self.positions, self.descriptors)
        ]

    def without_cloud(self) -> "Keyframe":
        return replace(self, cloud=PointCloud.empty())

    def with_pose(self, pose: SE3Transform) -> "Keyframe":
        return replace(self, pose_local=pose)

    def with_cloud(self, cloud: PointCloud) -> "Keyframe":
        return replace(self, cloud=cloud)


@dataclass(frozen=True, eq=False)
class AgentTrack:
    agent_id: str
    keyframes: Tuple[Keyframe, ...]
    local_scale: float

    def __post_init__(self) -> None:
        kfs = tuple(self.keyframes)
        if self.local_scale <= 0:
            raise ScenarioError(f"agent {self.agent_id}: local scale must be positive")
        for expected, kf in enumerate(kfs):
            if kf.index != expected or kf.agent != self.agent_id:
                raise ScenarioError(
                    f"agent {self.agent_id}: keyframe {kf.frame} out of order (expected {expected})"
                )
        object.__setattr__(self, "keyframes", kfs)

    def __len__(self) -> int:
        return len(self.keyframes)

    def __iter__(self) -> Iterator[Keyframe]:
        return iter(self.keyframes)

    def __getitem__(self, index: int) -> Keyframe:
        if not self.has(index):
            raise IndexError(f"agent {self.agent_id} has no keyframe {index}")
        return self.keyframes[index]

    def has(self, index: int) -> bool:
        return 0 <= index < len(self.keyframes)

    @property
    def poses(self) -> List[SE3Transform]:
        return [kf.pose_local for kf in self.keyframes]

    def with_poses(self, poses: List[SE3Transform]) -> "AgentTrack":
        if len(poses) != len(self.keyframes):
            raise ScenarioError("pose count does not match keyframe count")
        return replace(
            self, keyframes=tuple(kf.with_pose(p) for kf, p in zip(self.keyframes, poses))
        )


@dataclass(frozen=True)
class CovisibleWindow:
    """Keyframe indices of two agents over their shared window, aligned pairwise in
    source traversal order."""

    source: str
    target: str
    source_indices: Tuple[int, ...]
    target_indices: Tuple[int, ...]

    def pairs(self) -> List[Tuple[int, int]]:
        return list(zip(self.source_indices, self.target_indices))

    def contains(self, source_index: int, target_index: int) -> bool:
        return source_index in self.source_indices and target_index in self.target_indices


@dataclass(frozen=True, eq=False)
class Scenario:
    state: ScenarioState
    agents: Tuple[AgentTrack, ...]
    landmarks: NDArray[np.float64]
    ground_truth: Dict[str, Sim3Transform]
    rng_seed: int
    true_poses: Dict[str, Tuple[SE3Transform, ...]]
    covisibility: Tuple[CovisibleWindow, ...] = ()
    layout: str = "pair"
    config: Optional[object] = None

    def __post_init__(self) -> None:
        if len(self.agents) < 2:
            raise ScenarioError("a scenario needs at least two agents")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"duplicate agent ids: {ids}")
        for agent in self.agents:
            if agent.agent_id not in self.ground_truth:
                raise ScenarioError(f"agent {agent.agent_id} has no ground truth")
        lengths = {kf.descriptor_length for a in self.agents for kf in a if len(kf)}
        if len(lengths) > 1:
            raise ScenarioError(f"descriptor lengths differ across keyframes: {sorted(lengths)}")
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "landmarks", _frozen(self.landmarks, float).reshape(-1, 3))

    @property
    def agent_ids(self) -> List[str]:
        return [a.agent_id for a in self.agents]

    def agent(self, agent_id: str) -> AgentTrack:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)

    def expected_sigma(self, source: str, target: str) -> float:
        """Factor taking ``source`` agent units to ``target`` agent units."""
        return self.agent(source).local_scale / self.agent(target).local_scale

    def window(self, source: str, target: str) -> Optional[CovisibleWindow]:
        for w in self.covisibility:
            if (w.source, w.target) == (source, target):
                return w
        return None

    def global_pose_from_local(self, agent_id: str, index: int) -> Sim3Transform:
        """Ground truth applied to the agent's (possibly drifted) local pose."""
        kf = self.agent(agent_id)[index]
        return as_sim3(compose(self.ground_truth[agent_id], kf.pose_local))

    def true_positions(self, agent_id: str) -> NDArray[np.float64]:
        return np.array([p.translation for p in self.true_poses[agent_id]])

    def with_agents(self, agents: Tuple[AgentTrack, ...]) -> "Scenario":
        return replace(self, agents=agents)
