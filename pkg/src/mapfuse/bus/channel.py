"""Ordered, reliable, typed channels between agents and the master."""

from __future__ import annotations

import queue
from abc import ABC, abstractmethod
from collections import deque
from typing import Deque, Iterator, Optional

from mapfuse.exceptions import SessionError

from .framing import FrameReader, encode_frame
from .messages import Message

_CLOSED = object()


class Channel(ABC):
    @abstractmethod
    def send(self, message: Message) -> None: ...

    @abstractmethod
    def receive(self, timeout: Optional[float] = None) -> Optional[Message]:
        """Next message, or None once the channel is closed and drained."""

    @abstractmethod
    def close(self) -> None: ...

    def __iter__(self) -> Iterator[Message]:
        while True:
            message = self.receive()
            if message is None:
                return
            yield message


class QueueChannel(Channel):
    """In-process FIFO of message objects; safe between a producer and a consumer thread."""

    def __init__(self, maxsize: int = 0) -> None:
        self._queue: "queue.Queue[object]" = queue.Queue(maxsize)
        self._closed = False

    def send(self, message: Message) -> None:
        if self._closed:
            raise SessionError("send on a closed channel")
        self._queue.put(message)

    def receive(self, timeout: Optional[float] = None) -> Optional[Message]:
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty as exc:
            raise SessionError(f"no message within {timeout} s") from exc
        if item is _CLOSED:
            self._queue.put(_CLOSED)
            return None
        return item  # type: ignore[return-value]

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._queue.put(_CLOSED)


class FramedChannel(Channel):
    """Carries messages as framed bytes, optionally split into ``chunk_size`` pieces."""

    def __init__(self, chunk_size: Optional[int] = None) -> None:
        self._chunks: "queue.Queue[object]" = queue.Queue()
        self._reader = FrameReader()
        self._ready: Deque[Message] = deque()
        self._chunk_size = chunk_size
        self._closed = False
        self.bytes_sent = 0

    def send(self, message: Message) -> None:
        if self._closed:
            raise SessionError("send on a closed channel")
        data = encode_frame(message)
        self.bytes_sent += len(data)
        step = self._chunk_size or len(data)
        for start in range(0, len(data), step):
            self._chunks.put(data[start : start + step])

    def receive(self, timeout: Optional[float] = None) -> Optional[Message]:
        while not self._ready:
            try:
                item = self._chunks.get(timeout=timeout)
            except queue.Empty as exc:
                raise SessionError(f"no frame within {timeout} s") from exc
            if item is _CLOSED:
                self._chunks.put(_CLOSED)
                self._reader.close()
                return None
            self._ready.extend(self._reader.feed(item))  # type: ignore[arg-type]
        return self._ready.popleft()

    def drain(self) -> list[Message]:
        """Every message already complete in the channel, without blocking."""
        out: list[Message] = []
        while True:
            try:
                item = self._chunks.get_nowait()
            except queue.Empty:
                break
            if item is _CLOSED:
                self._chunks.put(_CLOSED)
                break
            self._ready.extend(self._reader.feed(item))  # type: ignore[arg-type]
        out.extend(self._ready)
        self._ready.clear()
        return out

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._chunks.put(_CLOSED)
