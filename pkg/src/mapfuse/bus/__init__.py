"""Master/slave message bus: replayed keyframe streams, pair monitors and merge notices."""

from __future__ import annotations

from .chaining import chain_merges
from .channel import Channel, FramedChannel, QueueChannel
from .framing import HEADER, MAGIC, VERSION, FrameReader, decode_frame, encode_frame
from .messages import (
    AgentMessage,
    Bye,
    CloudMsg,
    Hello,
    KeyframeMsg,
    MergeNotice,
    Message,
    MessageKind,
    PoseMsg,
    describe,
    message_from_payload,
)
from .session import (
    AgentBuffer,
    BusMode,
    BusParams,
    PairMonitor,
    SessionResult,
    replay,
    run_session,
    summary_keyframe,
)

__all__ = [
    "HEADER",
    "MAGIC",
    "VERSION",
    "AgentBuffer",
    "AgentMessage",
    "BusMode",
    "BusParams",
    "Bye",
    "Channel",
    "CloudMsg",
    "FrameReader",
    "FramedChannel",
    "Hello",
    "KeyframeMsg",
    "MergeNotice",
    "Message",
    "MessageKind",
    "PairMonitor",
    "PoseMsg",
    "QueueChannel",
    "SessionResult",
    "chain_merges",
    "decode_frame",
    "describe",
    "encode_frame",
    "message_from_payload",
    "replay",
    "run_session",
    "summary_keyframe",
]
