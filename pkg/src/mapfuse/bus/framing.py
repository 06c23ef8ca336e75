"""Length-prefixed binary frames.

Header ``>4sBBI``: magic ``MFB1``, format version, message kind, payload length in bytes.
The payload is UTF-8 JSON.
"""

from __future__ import annotations

import json
import logging
import struct
from typing import List, Tuple

from mapfuse.exceptions import FramingError

from .messages import Message, message_from_payload

logger = logging.getLogger("mapfuse.bus")
logger.addHandler(logging.NullHandler())

HEADER = struct.Struct(">4sBBI")
MAGIC = b"MFB1"
VERSION = 1
MAX_PAYLOAD = 256 * 1024 * 1024


def encode_frame(message: Message) -> bytes:
    payload = json.dumps(message.to_payload(), separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_PAYLOAD:
        raise FramingError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(MAGIC, VERSION, int(message.kind), len(payload)) + payload


def _parse_header(data: bytes) -> Tuple[int, int]:
    magic, version, kind, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FramingError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FramingError(f"unsupported frame version {version}")
    if length > MAX_PAYLOAD:
        raise FramingError(f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
    return kind, length


def _decode_payload(kind: int, body: bytes) -> Message:
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError(f"payload is not UTF-8 JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FramingError("payload must be a JSON object")
    return message_from_payload(kind, payload)


def decode_frame(data: bytes) -> Tuple[Message, int]:
    """Decode the first frame of ``data``; returns the message and the bytes consumed."""
    if len(data) < HEADER.size:
        raise FramingError(f"truncated header: {len(data)} of {HEADER.size} bytes")
    kind, length = _parse_header(data)
    end = HEADER.size + length
    if len(data) < end:
        raise FramingError(f"truncated payload: {len(data) - HEADER.size} of {length} bytes")
    return _decode_payload(kind, bytes(data[HEADER.size : end])), end


class FrameReader:
    """Incremental decoder: feed arbitrary byte chunks, collect complete messages."""

    def __init__(self) -> None:
        self._buffer = bytearray()

    def feed(self, chunk: bytes) -> List[Message]:
        self._buffer.extend(chunk)
        out: List[Message] = []
        while len(self._buffer) >= HEADER.size:
            kind, length = _parse_header(bytes(self._buffer[: HEADER.size]))
            end = HEADER.size + length
            if len(self._buffer) < end:
                break
            body = bytes(self._buffer[HEADER.size : end])
            del self._buffer[:end]
            out.append(_decode_payload(kind, body))
        return out

    @property
    def pending(self) -> int:
        return len(self._buffer)

    def close(self) -> None:
        if self._buffer:
            logger.error("Stream closed with %d undecoded bytes", len(self._buffer))
            raise FramingError(f"{len(self._buffer)} trailing bytes do not form a frame")
