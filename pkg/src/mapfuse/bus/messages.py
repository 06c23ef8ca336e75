"""Messages exchanged between slave agents and the master.

Every message converts to and from a JSON-ready payload; numbers survive the round trip
exactly, so a stream carried over framed bytes reproduces the in-process stream bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, ClassVar, Dict, Tuple, Type, Union

import numpy as np

from mapfuse.exceptions import FramingError
from mapfuse.geometry import FrameId, PointCloud, SE3Transform, Sim3Transform
from mapfuse.registration import MergeOutcome
from mapfuse.scene import Keyframe


class MessageKind(IntEnum):
    Hello = 1
    Bye = 2
    Keyframe = 3
    Pose = 4
    Cloud = 5
    Notice = 6


def _pose_out(pose: SE3Transform) -> list[float]:
    return list(pose.to_row_major())


def _pose_in(values: Any) -> SE3Transform:
    return SE3Transform.from_matrix(np.asarray(values, dtype=float).reshape(4, 4), renormalize=False)


def _frame_out(frame: FrameId) -> list[Any]:
    return [frame.agent, frame.index]


def _frame_in(value: Any) -> FrameId:
    agent, index = value
    return FrameId(str(agent), int(index))


@dataclass(frozen=True)
class Hello:
    kind: ClassVar[MessageKind] = MessageKind.Hello
    agent_id: str

    @property
    def agent(self) -> str:
        return self.agent_id

    def to_payload(self) -> Dict[str, Any]:
        return {"agent": self.agent_id}

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "Hello":
        return cls(str(payload["agent"]))


@dataclass(frozen=True)
class Bye:
    kind: ClassVar[MessageKind] = MessageKind.Bye
    agent_id: str

    @property
    def agent(self) -> str:
        return self.agent_id

    def to_payload(self) -> Dict[str, Any]:
        return {"agent": self.agent_id}

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "Bye":
        return cls(str(payload["agent"]))


@dataclass(frozen=True, eq=False)
class KeyframeMsg:
    """Landmark observations of one keyframe; pose and cloud travel separately."""

    kind: ClassVar[MessageKind] = MessageKind.Keyframe
    keyframe: Keyframe

    @property
    def agent(self) -> str:
        return self.keyframe.agent

    @property
    def frame(self) -> FrameId:
        return self.keyframe.frame

    def to_payload(self) -> Dict[str, Any]:
        kf = self.keyframe
        return {
            "frame": _frame_out(kf.frame),
            "landmark_ids": kf.landmark_ids.tolist(),
            "positions": kf.positions.tolist(),
            "descriptors": kf.descriptors.tolist(),
            "descriptor_length": kf.descriptor_length,
        }

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "KeyframeMsg":
        ids = np.asarray(payload["landmark_ids"], dtype=np.int64)
        length = int(payload["descriptor_length"])
        return cls(
            Keyframe(
                frame=_frame_in(payload["frame"]),
                pose_local=SE3Transform.identity(),
                landmark_ids=ids,
                positions=np.asarray(payload["positions"], dtype=float).reshape(-1, 3),
                descriptors=np.asarray(payload["descriptors"], dtype=float).reshape(ids.size, length),
            )
        )


@dataclass(frozen=True, eq=False)
class PoseMsg:
    kind: ClassVar[MessageKind] = MessageKind.Pose
    frame: FrameId
    pose: SE3Transform

    @property
    def agent(self) -> str:
        return self.frame.agent

    def to_payload(self) -> Dict[str, Any]:
        return {"frame": _frame_out(self.frame), "pose": _pose_out(self.pose)}

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "PoseMsg":
        return cls(_frame_in(payload["frame"]), _pose_in(payload["pose"]))


@dataclass(frozen=True, eq=False)
class CloudMsg:
    kind: ClassVar[MessageKind] = MessageKind.Cloud
    frame: FrameId
    cloud: PointCloud

    @property
    def agent(self) -> str:
        return self.frame.agent

    def to_payload(self) -> Dict[str, Any]:
        return {"frame": _frame_out(self.frame), "points": self.cloud.points.tolist()}

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "CloudMsg":
        points = np.asarray(payload["points"], dtype=float).reshape(-1, 3)
        return cls(_frame_in(payload["frame"]), PointCloud(points))


@dataclass(frozen=True, eq=False)
class MergeNotice:
    """Broadcast by the master once a pair of agents has been merged.

    ``relative`` maps the target world into the source world in source units;
    ``sigma_scaling`` and ``final`` are the merge factors in target units.
    """

    kind: ClassVar[MessageKind] = MessageKind.Notice
    source_agent: str
    target_agent: str
    sigma_scaling: Sim3Transform
    final: Sim3Transform
    relative: Sim3Transform
    anchor: Tuple[int, int]
    loop_report: Dict[str, Any] = field(default_factory=dict)
    scale_report: Dict[str, Any] = field(default_factory=dict)

    @property
    def agent(self) -> str:
        return self.source_agent

    @property
    def pair(self) -> Tuple[str, str]:
        return self.source_agent, self.target_agent

    @classmethod
    def from_outcome(cls, outcome: MergeOutcome) -> "MergeNotice":
        report = outcome.report()
        return cls(
            source_agent=outcome.source_id,
            target_agent=outcome.target_id,
            sigma_scaling=outcome.sigma_scaling,
            final=outcome.final,
            relative=outcome.relative,
            anchor=outcome.anchor,
            loop_report=report["loop"],
            scale_report=report["scale"],
        )

    def to_payload(self) -> Dict[str, Any]:
        return {
            "source": self.source_agent,
            "target": self.target_agent,
            "sigma_scaling": list(self.sigma_scaling.to_row_major()),
            "final": list(self.final.to_row_major()),
            "relative": list(self.relative.to_row_major()),
            "anchor": list(self.anchor),
            "loop_report": self.loop_report,
            "scale_report": self.scale_report,
        }

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "MergeNotice":
        anchor = payload["anchor"]
        return cls(
            source_agent=str(payload["source"]),
            target_agent=str(payload["target"]),
            sigma_scaling=Sim3Transform.from_row_major(payload["sigma_scaling"]),
            final=Sim3Transform.from_row_major(payload["final"]),
            relative=Sim3Transform.from_row_major(payload["relative"]),
            anchor=(int(anchor[0]), int(anchor[1])),
            loop_report=dict(payload.get("loop_report", {})),
            scale_report=dict(payload.get("scale_report", {})),
        )


AgentMessage = Union[Hello, Bye, KeyframeMsg, PoseMsg, CloudMsg]
Message = Union[AgentMessage, MergeNotice]

MESSAGE_TYPES: Dict[MessageKind, Type[Any]] = {
    MessageKind.Hello: Hello,
    MessageKind.Bye: Bye,
    MessageKind.Keyframe: KeyframeMsg,
    MessageKind.Pose: PoseMsg,
    MessageKind.Cloud: CloudMsg,
    MessageKind.Notice: MergeNotice,
}


def message_from_payload(kind: int, payload: Dict[str, Any]) -> Message:
    try:
        cls = MESSAGE_TYPES[MessageKind(kind)]
    except ValueError as exc:
        raise FramingError(f"unknown message kind {kind}") from exc
    try:
        return cls.from_payload(payload)  # type: ignore[no-any-return]
    except (KeyError, TypeError, ValueError) as exc:
        raise FramingError(f"malformed {MessageKind(kind).name} payload: {exc}") from exc


def describe(message: Message) -> Dict[str, Any]:
    """Compact transcript fields for a message."""
    out: Dict[str, Any] = {"type": type(message).__name__, "agent": message.agent}
    frame = getattr(message, "frame", None)
    if isinstance(frame, FrameId):
        out["index"] = frame.index
    return out
