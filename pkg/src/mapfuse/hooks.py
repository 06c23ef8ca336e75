from __future__ import annotations

import logging
from typing import Any, Callable, List, Literal

logger = logging.getLogger("mapfuse.hooks")
logger.addHandler(logging.NullHandler())

Subscriber = Callable[[Any], None]
FailureMode = Literal["ignore", "log", "raise"]


class NoticeBus:
    """Fan-out of merge notices to subscribed slaves."""

    def __init__(self, failure_mode: FailureMode = "ignore") -> None:
        self._subscribers: List[Subscriber] = []

        if failure_mode not in ("ignore", "log", "raise"):
            raise ValueError("failure_mode must be one of 'ignore', 'log', 'raise'")
        self._failure_mode = failure_mode

    def subscribe(self, func: Subscriber) -> None:
        if not callable(func):
            raise TypeError("Subscriber must be callable")
        self._subscribers.append(func)

    def publish(self, notice: Any) -> int:
        """Deliver ``notice`` to every subscriber; returns the number of clean deliveries."""
        delivered = 0
        for subscriber in self._subscribers:
            try:
                subscriber(notice)
                delivered += 1
            except Exception as exc:
                if self._failure_mode == "raise":
                    raise
                elif self._failure_mode == "log":
                    logger.error("Subscriber %r failed: %s", subscriber, exc)
                else:
                    logger.debug("Subscriber %r failed but ignored: %s", subscriber, exc)
        return delivered

    def clear(self) -> None:
        self._subscribers.clear()

    def __len__(self) -> int:
        return len(self._subscribers)
