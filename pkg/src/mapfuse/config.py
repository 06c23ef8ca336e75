from __future__ import annotations

import logging
import os
import threading
from contextlib import contextmanager
from types import MappingProxyType
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional

from .exceptions import SettingsError, SettingsValidationError
from .locks import LockGuard
from .params import REGISTRY, get_all_specs, resolve_and_get, resolve_param_name
from .utils import _immutable_copy

logger = logging.getLogger("mapfuse.config")
logger.addHandler(logging.NullHandler())

ENV_PREFIX = "MAPFUSE_"

PostUpdateHook = Callable[[Mapping[str, Any]], None]


class Settings:
    """
    Validated view over the parameter registry.

    Every registered parameter has a value; unspecified ones take their default. Values are
    stored as immutable copies. A session locks its settings while it runs.
    """

    def __init__(
        self,
        initial_values: Optional[Mapping[str, Any]] = None,
        *,
        immutable: bool = False,
    ) -> None:
        self._lock = threading.RLock()
        self._guard = LockGuard()
        self._hooks: List[PostUpdateHook] = []
        self._values: Dict[str, Any] = {
            name: _immutable_copy(spec["default"]) for name, spec in get_all_specs().items()
        }
        if initial_values:
            self._values.update(self._validate_and_resolve(initial_values, context="init"))
        if immutable:
            self.lock("immutable")

    @classmethod
    def from_env(
        cls,
        prefix: str = ENV_PREFIX,
        environ: Optional[Mapping[str, str]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "Settings":
        """Build settings from ``<prefix><NAME>`` environment variables, then ``overrides``."""
        env = os.environ if environ is None else environ
        values: Dict[str, Any] = {}
        for key, text in env.items():
            if not key.startswith(prefix):
                continue
            name = key[len(prefix) :]
            if not REGISTRY.has(name):
                logger.debug("Ignoring unknown environment parameter %r", key)
                continue
            values[name] = REGISTRY.get(name).parse_text(text)
        if overrides:
            values.update(overrides)
        return cls(values)

    def _validate_and_resolve(
        self, input_dict: Mapping[str, Any], *, context: str = "update"
    ) -> Dict[str, Any]:
        errors: Dict[str, str] = {}
        resolved: Dict[str, Any] = {}
        for k, v in input_dict.items():
            try:
                canon, spec = resolve_and_get(k)
                value = tuple(v) if isinstance(v, list) else v
                spec.validate(value)
                resolved[canon] = _immutable_copy(value)
            except SettingsValidationError as exc:
                for err_key, err_msg in exc.errors.items():
                    errors[err_key] = f"[{context}] {err_msg}"
            except SettingsError as exc:
                errors[str(k)] = f"[{context}] {exc}"
        if errors:
            logger.error("%s failed with errors: %s", context, errors)
            raise SettingsValidationError(errors)
        return resolved

    # locking
    def lock(self, holder: str = "") -> None:
        with self._lock:
            self._guard.lock(holder)
            logger.debug("Settings locked by %r", holder)

    def unlock(self) -> None:
        with self._lock:
            self._guard.unlock()

    def is_locked(self) -> bool:
        with self._lock:
            return self._guard.is_locked()

    @contextmanager
    def locked(self, holder: str = "") -> Iterator["Settings"]:
        """Hold the lock for the duration of the block, restoring the prior state after."""
        with self._lock:
            was_locked = self._guard.is_locked()
            self._guard.lock(holder)
        try:
            yield self
        finally:
            if not was_locked:
                self.unlock()

    # updates
    def update(self, **kwargs: Any) -> None:
        with self._lock:
            self._guard.ensure_unlocked()
            resolved = self._validate_and_resolve(kwargs, context="update")
            self._values.update(resolved)
            snapshot = self.snapshot()
        logger.info("Settings updated keys=%s", sorted(resolved))
        for hook in list(self._hooks):
            hook(snapshot)

    def register_post_update_hook(self, func: PostUpdateHook) -> None:
        if not callable(func):
            raise TypeError("Hook must be callable")
        with self._lock:
            self._hooks.append(func)

    @contextmanager
    def temp_update(self, **kwargs: Any) -> Iterator["Settings"]:
        """Apply ``kwargs`` for the duration of the block and restore prior values on exit."""
        with self._lock:
            self._guard.ensure_unlocked()
            prior = dict(self._values)
            resolved = self._validate_and_resolve(kwargs, context="temp_update")
            self._values.update(resolved)
        try:
            yield self
        finally:
            with self._lock:
                self._values = prior

    def get(self, key: str, default: Any = None) -> Any:
        name = resolve_param_name(key)
        with self._lock:
            if name in self._values:
                return self._values[name]
        return default

    def snapshot(self) -> MappingProxyType[str, Any]:
        with self._lock:
            return MappingProxyType(dict(self._values))

    def as_plain_dict(self) -> Dict[str, Any]:
        """JSON-friendly copy of every value (tuples become lists)."""
        with self._lock:
            return {k: list(v) if isinstance(v, tuple) else v for k, v in self._values.items()}

    def copy(self, **overrides: Any) -> "Settings":
        with self._lock:
            values = dict(self._values)
        values.update(overrides)
        return Settings(values)

    def __getitem__(self, key: str) -> Any:
        name = resolve_param_name(key)
        with self._lock:
            return self._values[name]

    def __contains__(self, key: object) -> bool:
        if not isinstance(key, str) or not REGISTRY.has(key):
            return False
        with self._lock:
            return resolve_param_name(key) in self._values

    def __iter__(self) -> Iterator[str]:
        with self._lock:
            return iter(tuple(self._values.keys()))

    def __len__(self) -> int:
        with self._lock:
            return len(self._values)

    def __repr__(self) -> str:
        return f"<Settings params={len(self)} locked={self.is_locked()}>"


def resolve_settings(settings: Optional[Settings]) -> Settings:
    return settings if settings is not None else Settings()
