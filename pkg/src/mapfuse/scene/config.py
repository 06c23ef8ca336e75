from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Mapping, Optional, Tuple

from mapfuse.config import Settings, resolve_settings
from mapfuse.exceptions import ScenarioError

NOISE_FIELDS = (
    "descriptor_noise",
    "observation_noise",
    "odometry_sigma_t",
    "odometry_sigma_r",
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and noise of a synthetic scenario; lengths are world units."""

    scales: Tuple[float, ...] = (1.0, 1.0)
    step: float = 0.5
    camera_height: float = 2.0
    lateral_offset: float = 0.1
    turn_angle_deg: float = 60.0
    view_radius: float = 0.45
    cloud_radius: float = 0.8
    landmark_density: float = 150.0
    landmark_max_height: float = 0.6
    ground_density: float = 40.0
    descriptor_length: int = 32
    descriptor_noise: float = 0.02
    observation_noise: float = 0.003
    odometry_sigma_t: float = 0.005
    odometry_sigma_r: float = 0.0005
    dropout: float = 0.0
    single_window: int = 5
    single_pre: int = 8
    single_post: int = 11
    many_window: int = 14
    many_pre: int = 4
    many_post: int = 6

    def __post_init__(self) -> None:
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if any(s <= 0 for s in self.scales):
            raise ScenarioError(f"agent scales must be positive, got {self.scales}")
        for name in NOISE_FIELDS + ("dropout",):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name} must be >= 0")
        if self.step <= 0 or self.camera_height <= self.landmark_max_height:
            raise ScenarioError("step must be positive and cameras must fly above the landmarks")

    @classmethod
    def from_settings(
        cls, settings: Optional[Settings] = None, **overrides: Any
    ) -> "ScenarioConfig":
        s = resolve_settings(settings)
        values: Dict[str, Any] = {f.name: s[f"SCENE_{f.name.upper()}"] for f in fields(cls)}
        values.update(overrides)
        return cls(**values)

    def noiseless(self) -> "ScenarioConfig":
        return replace(self, **{name: 0.0 for name in NOISE_FIELDS}, dropout=0.0)

    def with_noise(self, level: float) -> "ScenarioConfig":
        """Scale every noise term by ``level`` (0 gives a noiseless scenario)."""
        if level < 0:
            raise ScenarioError("noise level must be >= 0")
        return replace(self, **{name: getattr(self, name) * level for name in NOISE_FIELDS})

    def with_scales(self, *scales: float) -> "ScenarioConfig":
        return replace(self, scales=tuple(scales))

    def window_plan(self, many: bool) -> Tuple[int, int, int]:
        """(window, pre, post) keyframe counts."""
        if many:
            return self.many_window, self.many_pre, self.many_post
        return self.single_window, self.single_pre, self.single_post

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["scales"] = list(self.scales)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown scenario config keys: {sorted(unknown)}")
        return cls(**dict(data))
