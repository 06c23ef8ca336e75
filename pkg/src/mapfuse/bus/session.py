"""Replayed multi-agent sessions: slaves stream keyframes, the master merges and notifies.

Each agent pair is watched by a ``PairMonitor``. A monitor buffers the keyframes of both
agents, collects place-recognition candidates as keyframes arrive, and fires the merge
pipeline on the first candidate whose neighbourhood is complete and yields a match triple.
After that it ignores the pair.

In ``Centralized`` mode every monitor lives in the master and reads the merged stream. In
``Distributed`` mode the monitor of a pair runs on the source agent's node: the source's
own messages are delivered locally and the target's arrive as framed bytes.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Set, Tuple

import numpy as np

from mapfuse.config import Settings, resolve_settings
from mapfuse.exceptions import (
    BoundaryError,
    InsufficientMatchesError,
    MapFuseError,
    SessionError,
    SessionTimeoutError,
)
from mapfuse.geometry import PointCloud, SE3Transform, Sim3Transform
from mapfuse.hooks import FailureMode, NoticeBus
from mapfuse.loops import DetectParams, LoopClosure, accepts_place, match_keyframes
from mapfuse.registration import MergedMap, MergeOutcome, merge_pair, merge_tracks
from mapfuse.scene import AgentTrack, Keyframe, Scenario
from mapfuse.transcript import Transcript

from .chaining import chain_merges
from .channel import FramedChannel, QueueChannel
from .messages import (
    AgentMessage,
    Bye,
    CloudMsg,
    Hello,
    KeyframeMsg,
    MergeNotice,
    PoseMsg,
    describe,
)

logger = logging.getLogger("mapfuse.bus")
logger.addHandler(logging.NullHandler())

# Master-side tracks carry no scale information; agents stay in their own units.
MASTER_LOCAL_SCALE = 1.0


class BusMode(str, Enum):
    Centralized = "centralized"
    Distributed = "distributed"


@dataclass(frozen=True)
class BusParams:
    buffer_size: int = 32
    summary_voxel: float = 0.05
    rate_hz: float = 0.0
    notice_failure_mode: FailureMode = "log"
    transcript_max: int = 100_000

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None) -> "BusParams":
        s = resolve_settings(settings)
        return cls(
            buffer_size=s["BUS_BUFFER_SIZE"],
            summary_voxel=s["BUS_SUMMARY_VOXEL"],
            rate_hz=s["BUS_RATE_HZ"],
            notice_failure_mode=s["BUS_NOTICE_FAILURE_MODE"],
            transcript_max=s["BUS_TRANSCRIPT_MAX"],
        )


def replay(scenario: Scenario, rate_hz: float = 0.0) -> Iterator[AgentMessage]:
    """Hello from every agent, then per keyframe index a KeyframeMsg (landmarks only),
    PoseMsg and CloudMsg from each agent that still has one, then Bye from every agent."""
    agents = sorted(scenario.agents, key=lambda a: a.agent_id)
    for agent in agents:
        yield Hello(agent.agent_id)
    period = 1.0 / rate_hz if rate_hz > 0 else 0.0
    for k in range(max(len(a) for a in agents)):
        if period and k:
            time.sleep(period)
        for agent in agents:
            if not agent.has(k):
                continue
            kf = agent[k]
            yield KeyframeMsg(kf.without_cloud())
            yield PoseMsg(kf.frame, kf.pose_local)
            yield CloudMsg(kf.frame, kf.cloud)
    for agent in agents:
        yield Bye(agent.agent_id)


def summary_keyframe(kf: Keyframe, voxel: float) -> Keyframe:
    """Landmark-free stand-in for an evicted keyframe with a voxel-downsampled cloud."""
    length = kf.descriptor_length
    return Keyframe(
        frame=kf.frame,
        pose_local=kf.pose_local,
        landmark_ids=np.zeros(0, dtype=np.int64),
        positions=np.zeros((0, 3)),
        descriptors=np.zeros((0, length)),
        cloud=kf.cloud.voxel_downsample(voxel),
    )


class AgentBuffer:
    """Keyframes of one agent assembled from their three messages, in index order.

    The newest ``capacity`` keyframes are kept whole; older ones become summaries.
    """

    def __init__(self, agent_id: str, capacity: int, summary_voxel: float) -> None:
        self.agent_id = agent_id
        self.capacity = capacity
        self.summary_voxel = summary_voxel
        self.finished = False
        self._keyframes: List[Keyframe] = []
        self._landmarks: Dict[int, Keyframe] = {}
        self._poses: Dict[int, SE3Transform] = {}
        self._clouds: Dict[int, PointCloud] = {}
        self._track: Optional[AgentTrack] = None

    def __len__(self) -> int:
        return len(self._keyframes)

    def has(self, index: int) -> bool:
        return 0 <= index < len(self._keyframes)

    def __getitem__(self, index: int) -> Keyframe:
        return self._keyframes[index]

    def accept(self, message: AgentMessage) -> Optional[int]:
        """Store a part; returns the index of a keyframe that became complete."""
        if isinstance(message, Bye):
            self.finished = True
            return None
        if isinstance(message, KeyframeMsg):
            index = message.frame.index
            self._landmarks[index] = message.keyframe
        elif isinstance(message, PoseMsg):
            index = message.frame.index
            self._poses[index] = message.pose
        elif isinstance(message, CloudMsg):
            index = message.frame.index
            self._clouds[index] = message.cloud
        else:
            return None
        if index < len(self._keyframes):
            raise SessionError(f"agent {self.agent_id}: keyframe {index} delivered twice")
        if not (index in self._landmarks and index in self._poses and index in self._clouds):
            return None
        if index != len(self._keyframes):
            logger.error("Agent %s delivered keyframe %d out of order", self.agent_id, index)
            raise SessionError(
                f"agent {self.agent_id}: keyframe {index} arrived before {len(self._keyframes)}"
            )
        kf = self._landmarks.pop(index).with_pose(self._poses.pop(index))
        self._keyframes.append(kf.with_cloud(self._clouds.pop(index)))
        evict = len(self._keyframes) - self.capacity - 1
        if evict >= 0 and len(self._keyframes[evict]):
            self._keyframes[evict] = summary_keyframe(self._keyframes[evict], self.summary_voxel)
        self._track = None
        return index

    def track(self) -> AgentTrack:
        if self._track is None:
            self._track = AgentTrack(self.agent_id, tuple(self._keyframes), MASTER_LOCAL_SCALE)
        return self._track


class PairMonitor:
    """Loop-closure watch over one agent pair; fires at most once."""

    def __init__(
        self,
        agent_a: str,
        agent_b: str,
        settings: Optional[Settings] = None,
        transcript: Optional[Transcript] = None,
    ) -> None:
        self.settings = resolve_settings(settings)
        self.source_id, self.target_id = sorted((agent_a, agent_b))
        params = BusParams.from_settings(self.settings)
        self._detect = DetectParams.from_settings(self.settings)
        self._buffers: Dict[str, AgentBuffer] = {
            a: AgentBuffer(a, params.buffer_size, params.summary_voxel)
            for a in (self.source_id, self.target_id)
        }
        self._pending: List[LoopClosure] = []
        self._transcript = transcript
        self.outcome: Optional[MergeOutcome] = None
        self.candidates_seen = 0

    @property
    def pair(self) -> Tuple[str, str]:
        return self.source_id, self.target_id

    @property
    def done(self) -> bool:
        return self.outcome is not None

    def buffer(self, agent: str) -> AgentBuffer:
        return self._buffers[agent]

    @property
    def buffers(self) -> Dict[str, AgentBuffer]:
        return dict(self._buffers)

    def deliver(self, message: AgentMessage) -> Optional[MergeOutcome]:
        """Feed one message; returns the merge outcome on the delivery that triggers it."""
        agent = message.agent
        if agent not in self._buffers:
            return None
        index = self._buffers[agent].accept(message)
        if self.done:
            return None
        if index is not None:
            self._collect(agent, index)
        if index is not None or isinstance(message, Bye):
            return self._try_pending()
        return None

    def _collect(self, agent: str, index: int) -> None:
        source, target = self._buffers[self.source_id], self._buffers[self.target_id]
        if agent == self.source_id:
            pairs = [(index, j) for j in range(len(target))]
        else:
            pairs = [(i, index) for i in range(len(source))]
        for i, j in pairs:
            kf_s, kf_t = source[i], target[j]
            if not len(kf_s) or not len(kf_t):
                continue
            lc = match_keyframes(kf_s, kf_t, self._detect)
            if accepts_place(lc, kf_s, kf_t, self._detect):
                self._pending.append(lc)
                self.candidates_seen += 1
        self._pending.sort(key=lambda lc: lc.pair)

    def _waiting(self, lc: LoopClosure) -> Optional[bool]:
        """True while a neighbour may still arrive, False once it never will, None if all
        neighbours are present."""
        i, j = lc.pair
        needs = [(self.source_id, i - 1), (self.source_id, i + 1)]
        needs += [(self.target_id, j - 1), (self.target_id, j + 1)]
        missing = [(a, k) for a, k in needs if not self._buffers[a].has(k)]
        if not missing:
            return None
        return all(k >= 0 and not self._buffers[a].finished for a, k in missing)

    def _try_pending(self) -> Optional[MergeOutcome]:
        keep: List[LoopClosure] = []
        fired: Optional[MergeOutcome] = None
        for lc in self._pending:
            if fired is not None:
                break
            waiting = self._waiting(lc)
            if waiting is True:
                keep.append(lc)
                continue
            if waiting is False:
                logger.debug("Dropping candidate %s at a stream boundary", lc.pair)
                continue
            try:
                fired = merge_pair(
                    self._buffers[self.source_id].track(),
                    self._buffers[self.target_id].track(),
                    lc=lc,
                    settings=self.settings,
                    transcript=self._transcript,
                )
            except (BoundaryError, InsufficientMatchesError) as exc:
                logger.debug("Candidate %s has no match triple: %s", lc.pair, exc)
            except MapFuseError as exc:
                logger.warning("Merge from candidate %s failed: %s", lc.pair, exc)
        self._pending = [] if fired is not None else keep
        self.outcome = fired
        return fired


@dataclass(frozen=True, eq=False)
class SessionResult:
    mode: BusMode
    notices: Tuple[MergeNotice, ...]
    outcomes: Tuple[MergeOutcome, ...]
    transforms: Dict[str, Sim3Transform]
    merged: MergedMap
    tracks: Dict[str, AgentTrack]
    transcript: Transcript
    timings: Dict[str, float] = field(default_factory=dict)
    inboxes: Dict[str, List[MergeNotice]] = field(default_factory=dict)

    def notice_for(self, a: str, b: str) -> Optional[MergeNotice]:
        wanted = frozenset((a, b))
        for n in self.notices:
            if frozenset(n.pair) == wanted:
                return n
        return None

    def report(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "notices": [n.to_payload() for n in self.notices],
            "merges": [o.report() for o in self.outcomes],
            "transforms": {a: list(t.to_row_major()) for a, t in sorted(self.transforms.items())},
            "timings": dict(self.timings),
        }


class _Node:
    """Routing of the replayed stream to pair monitors for one bus mode."""

    def __init__(self, mode: BusMode, settings: Settings, transcript: Transcript) -> None:
        self.mode = mode
        self.settings = settings
        self.transcript = transcript
        self.monitors: Dict[Tuple[str, str], PairMonitor] = {}
        self.links: Dict[Tuple[str, str], FramedChannel] = {}
        self.agents: List[str] = []

    def hello(self, agent: str) -> None:
        for other in self.agents:
            monitor = PairMonitor(other, agent, self.settings, self.transcript)
            self.monitors[monitor.pair] = monitor
            if self.mode is BusMode.Distributed:
                self.links[monitor.pair] = FramedChannel()
        self.agents.append(agent)

    def route(self, message: AgentMessage) -> List[MergeOutcome]:
        if isinstance(message, Hello):
            self.hello(message.agent)
        if self.mode is BusMode.Centralized:
            self.transcript.add("message", node="master", via="local", **describe(message))
            deliveries = [(m, message) for m in self.monitors.values() if message.agent in m.pair]
        else:
            deliveries = []
            for pair, monitor in self.monitors.items():
                if message.agent == monitor.source_id:
                    self.transcript.add(
                        "message", node=monitor.source_id, via="local", **describe(message)
                    )
                    deliveries.append((monitor, message))
                elif message.agent == monitor.target_id:
                    link = self.links[pair]
                    link.send(message)
                    for received in link.drain():
                        self.transcript.add(
                            "message", node=monitor.source_id, via="framed", **describe(received)
                        )
                        deliveries.append((monitor, received))  # type: ignore[arg-type]
        fired = []
        for monitor, msg in deliveries:
            outcome = monitor.deliver(msg)
            if outcome is not None:
                fired.append(outcome)
        return fired

    def close(self) -> None:
        for link in self.links.values():
            link.close()


def _produce(
    scenario: Scenario, channel: QueueChannel, rate_hz: float, errors: List[BaseException]
) -> None:
    try:
        for message in replay(scenario, rate_hz):
            channel.send(message)
    except BaseException as exc:  # re-raised by the consumer
        errors.append(exc)
    finally:
        channel.close()


def run_session(
    scenario: Scenario,
    mode: BusMode = BusMode.Centralized,
    settings: Optional[Settings] = None,
    notice_bus: Optional[NoticeBus] = None,
    rate_hz: Optional[float] = None,
) -> SessionResult:
    """Replay ``scenario`` through the bus and merge every agent pair that closes a loop.

    Settings stay locked while the session runs.
    """
    s = resolve_settings(settings)
    params = BusParams.from_settings(s)
    rate = params.rate_hz if rate_hz is None else rate_hz
    transcript = Transcript(max_entries=params.transcript_max)
    bus = notice_bus if notice_bus is not None else NoticeBus(params.notice_failure_mode)
    inboxes: Dict[str, List[MergeNotice]] = {}
    started = time.perf_counter()

    with s.locked(f"session:{mode.value}"):
        node = _Node(mode, s, transcript)
        channel = QueueChannel()
        errors: List[BaseException] = []
        producer = threading.Thread(
            target=_produce,
            args=(scenario, channel, rate, errors),
            name="mapfuse-replay",
            daemon=True,
        )
        producer.start()
        notices: List[MergeNotice] = []
        outcomes: List[MergeOutcome] = []
        subscribed: Set[str] = set()
        try:
            for message in channel:
                if isinstance(message, Hello) and message.agent not in subscribed:
                    subscribed.add(message.agent)
                    inbox = inboxes.setdefault(message.agent, [])
                    bus.subscribe(_inbox_for(message.agent, inbox))
                for outcome in node.route(message):  # type: ignore[arg-type]
                    notice = MergeNotice.from_outcome(outcome)
                    outcomes.append(outcome)
                    notices.append(notice)
                    transcript.add(
                        "notice",
                        source=notice.source_agent,
                        target=notice.target_agent,
                        anchor=list(notice.anchor),
                        loop_report=notice.loop_report,
                        scale_report=notice.scale_report,
                    )
                    bus.publish(notice)
        finally:
            node.close()
            producer.join()
        if errors:
            raise errors[0]

    if not notices:
        logger.error("Session over %s ended without a loop closure", scenario.agent_ids)
        raise SessionTimeoutError(
            f"no loop closure between any of {scenario.agent_ids} in the replayed stream"
        )

    tracks = {a: b.track() for m in node.monitors.values() for a, b in m.buffers.items()}
    transforms = chain_merges(notices)
    merged = merge_tracks({a: tracks[a] for a in transforms}, transforms, root=min(transforms))

    timings: Dict[str, float] = {}
    for outcome in outcomes:
        for stage, seconds in outcome.timings.items():
            timings[stage] = timings.get(stage, 0.0) + seconds
    timings["session"] = time.perf_counter() - started
    logger.info(
        "Session (%s) over %d agents: %d merge notices", mode.value, len(node.agents), len(notices)
    )
    return SessionResult(
        mode=mode,
        notices=tuple(notices),
        outcomes=tuple(outcomes),
        transforms=transforms,
        merged=merged,
        tracks=tracks,
        transcript=transcript,
        timings=timings,
        inboxes=inboxes,
    )


def _inbox_for(agent: str, inbox: List[MergeNotice]) -> Any:
    def receive(notice: MergeNotice) -> None:
        if agent in notice.pair:
            inbox.append(notice)

    return receive
