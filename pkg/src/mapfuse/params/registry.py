from __future__ import annotations

import logging
from enum import Enum
from typing import Callable, Dict, Iterable, Optional, Tuple, Union

from mapfuse.exceptions import (
    SettingsDuplicateError,
    SettingsNotFoundError,
    SettingsValidationError,
)

from .spec import ParamSpec

logger = logging.getLogger("mapfuse.params")
logger.addHandler(logging.NullHandler())


class ParamRegistry:
    """Canonical UPPER_SNAKE parameter names plus case-insensitive aliases."""

    def __init__(self) -> None:
        self._specs: Dict[str, ParamSpec] = {}
        self._aliases: Dict[str, str] = {}
        self._clear_caches: Optional[Callable[[], None]] = None
        logger.debug("ParamRegistry initialized id=%s", hex(id(self)))

    @staticmethod
    def _canon(name: str) -> str:
        return name.strip().upper()

    def register(
        self, spec: ParamSpec, aliases: Iterable[str] = (), override: bool = False
    ) -> None:
        key = self._canon(spec.name)
        aliases = tuple(aliases)
        logger.debug(
            "Register called: name=%r canon=%r override=%s aliases=%r",
            spec.name,
            key,
            override,
            aliases,
        )
        if not override and key in self._specs:
            logger.error("Register failed: %r already registered", key)
            raise SettingsDuplicateError({spec.name: "Parameter already registered."})
        self._specs[key] = spec
        self._register_aliases(aliases, key, override)
        self._invalidate()

    def _register_aliases(self, aliases: Iterable[str], key: str, override: bool) -> None:
        for a in aliases:
            ak = self._canon(a)
            if not override and ak in self._aliases and self._aliases[ak] != key:
                logger.error("Alias conflict: %r already points to %r", ak, self._aliases[ak])
                raise SettingsValidationError({a: f"Alias already used for {self._aliases[ak]}."})
            self._aliases[ak] = key
            logger.debug("Alias set: %r -> %r", ak, key)

    def _invalidate(self) -> None:
        if self._clear_caches is not None:
            self._clear_caches()

    def has(self, name_or_alias: Union[str, Enum]) -> bool:
        try:
            self._resolve_key(name_or_alias)
        except SettingsNotFoundError:
            return False
        return True

    def get(self, name_or_alias: Union[str, Enum]) -> ParamSpec:
        return self._specs[self._resolve_key(name_or_alias)]

    def resolve_name(self, name_or_alias: Union[str, Enum]) -> str:
        return self._resolve_key(name_or_alias)

    def _resolve_key(self, name_or_alias: Union[str, Enum]) -> str:
        raw = name_or_alias.value if isinstance(name_or_alias, Enum) else name_or_alias
        if not isinstance(raw, str):
            logger.error("Parameter key not a string: %r", name_or_alias)
            raise SettingsValidationError({str(name_or_alias): "Parameter key must be a string."})
        k = self._canon(raw)
        if k in self._specs:
            return k
        if k in self._aliases:
            return self._aliases[k]
        logger.error(
            "Unknown parameter: %r | specs=%d aliases=%d", raw, len(self._specs), len(self._aliases)
        )
        raise SettingsNotFoundError({k: "Unknown parameter."})

    def all_names(self) -> Tuple[str, ...]:
        return tuple(sorted(self._specs.keys()))

    def aliases_of(self, name: str) -> Tuple[str, ...]:
        key = self._resolve_key(name)
        return tuple(sorted(a for a, target in self._aliases.items() if target == key))

    def clear(self) -> None:
        logger.debug("Clearing registry: specs=%d aliases=%d", len(self._specs), len(self._aliases))
        self._specs.clear()
        self._aliases.clear()
        self._invalidate()
