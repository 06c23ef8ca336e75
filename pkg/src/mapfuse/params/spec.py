from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple, Type, Union

from mapfuse.exceptions import SettingsValidationError


@dataclass(frozen=True)
class ParamSpec:
    name: str
    default: Any
    value_type: Union[Type[Any], Tuple[Type[Any], ...]]
    validator: Optional[Callable[[Any], bool]] = None
    bounds: Optional[Tuple[Union[int, float], Union[int, float]]] = None
    description: Optional[str] = None
    allow_none: bool = False

    def validate(self, value: Any) -> None:
        if value is None:
            if not self.allow_none:
                raise SettingsValidationError({self.name: "None value not allowed."})
            return

        # bool is an int subclass; only accept it where bool is the declared type
        if isinstance(value, bool) and not self._accepts_bool():
            raise SettingsValidationError(
                {self.name: f"Expected value_type {self.value_type}, got {type(value)}."}
            )
        try:
            if not isinstance(value, self.value_type):
                raise SettingsValidationError(
                    {self.name: f"Expected value_type {self.value_type}, got {type(value)}."}
                )
        except TypeError as e:
            raise SettingsValidationError(
                {self.name: f"Invalid value_type specification {self.value_type}."}
            ) from e

        if not self._bounds_check(value):
            assert self.bounds is not None
            lo, hi = self.bounds
            raise SettingsValidationError({self.name: f"Value {value} out of bounds [{lo}, {hi}]."})

        if self.validator is not None:
            try:
                valid = self.validator(value)
            except Exception as e:
                raise SettingsValidationError(
                    {self.name: f"Custom validator raised exception: {e}"}
                ) from e
            if not valid:
                raise SettingsValidationError({self.name: "Custom validator returned False."})

    def _accepts_bool(self) -> bool:
        types = self.value_type if isinstance(self.value_type, tuple) else (self.value_type,)
        return bool in types

    def _bounds_check(self, value: Any) -> bool:
        if self.has_bounds():
            assert self.bounds is not None
            lo, hi = self.bounds
            if isinstance(value, (str, list, tuple, dict)):
                return lo <= len(value) <= hi
            elif isinstance(value, (int, float)):
                return lo <= value <= hi
        return True

    def has_bounds(self) -> bool:
        return self.bounds is not None

    def parse_text(self, text: str) -> Any:
        """Convert an environment or command-line string into this parameter's type."""
        types = self.value_type if isinstance(self.value_type, tuple) else (self.value_type,)
        raw = text.strip()
        try:
            if bool in types:
                lowered = raw.lower()
                if lowered in ("1", "true", "yes", "on"):
                    return True
                if lowered in ("0", "false", "no", "off"):
                    return False
                raise ValueError(f"not a boolean: {text!r}")
            if int in types and float not in types:
                return int(raw)
            if float in types:
                return float(raw)
            if tuple in types or list in types:
                return tuple(_scalar(part) for part in raw.split(",") if part.strip())
        except ValueError as e:
            raise SettingsValidationError({self.name: f"Cannot parse {text!r}: {e}"}) from e
        return raw

    def to_mapping(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {"default": self.default, "value_type": self.value_type}
        if self.validator is not None:
            d["validator"] = self.validator
        if self.bounds is not None:
            d["bounds"] = self.bounds
        if self.description:
            d["description"] = self.description
        return d

    def __getitem__(self, item: str) -> Any:
        return self.to_mapping()[item]


def _scalar(text: str) -> Any:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        return text
