from __future__ import annotations

import logging

from .exceptions import SettingsLockedError

logger = logging.getLogger("mapfuse.locks")
logger.addHandler(logging.NullHandler())


class LockGuard:
    """Lock flag for a Settings instance; a running session holds it."""

    def __init__(self) -> None:
        self._locked = False
        self._holder: str | None = None

    def lock(self, holder: str = "") -> None:
        self._locked = True
        self._holder = holder or None

    def unlock(self) -> None:
        if self._locked:
            logger.debug("Released lock held by %r", self._holder)
        self._locked = False
        self._holder = None

    def ensure_unlocked(self) -> None:
        if self._locked:
            raise SettingsLockedError(
                f"Settings are locked{f' by {self._holder}' if self._holder else ''}"
            )

    def is_locked(self) -> bool:
        return self._locked

    @property
    def holder(self) -> str | None:
        return self._holder
