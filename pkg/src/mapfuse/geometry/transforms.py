"""SE(3) and Sim(3) values and the frame algebra shared by every pipeline stage.

Convention: ``T_ab`` maps points expressed in frame ``b`` to coordinates in frame ``a``,
so ``compose(T_ab, T_bc)`` is ``T_ac`` and a transform applied to a point is
``scale * R @ p + t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union, overload

import numpy as np
from numpy.typing import ArrayLike, NDArray

from mapfuse.exceptions import InvalidTransformError

from .cloud import PointCloud
from .rotation import Rotation, project_to_so3

WORLD_INDEX = -1


def _vector3(value: ArrayLike, what: str) -> NDArray[np.float64]:
    v = np.array(value, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise InvalidTransformError(f"{what} must have 3 components, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidTransformError(f"{what} has non-finite components")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, order=True)
class FrameId:
    """A keyframe of one agent, or that agent's world frame (``index == WORLD_INDEX``)."""

    agent: str
    index: int

    def __post_init__(self) -> None:
        if self.index < 0 and self.index != WORLD_INDEX:
            raise InvalidTransformError(f"keyframe index must be >= 0, got {self.index}")

    @classmethod
    def world(cls, agent: str) -> "FrameId":
        return cls(agent, WORLD_INDEX)

    @property
    def is_world(self) -> bool:
        return self.index == WORLD_INDEX

    def shifted(self, offset: int) -> "FrameId":
        return FrameId(self.agent, self.index + offset)

    def __str__(self) -> str:
        return f"{self.agent}:{'world' if self.is_world else self.index}"


@dataclass(frozen=True, eq=False)
class SE3Transform:
    rotation: Rotation
    translation: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "translation", _vector3(self.translation, "translation"))

    @property
    def scale(self) -> float:
        return 1.0

    @classmethod
    def identity(cls) -> "SE3Transform":
        return cls(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: ArrayLike, *, renormalize: bool = True) -> "SE3Transform":
        m = np.asarray(matrix, dtype=float).reshape(4, 4)
        return cls(Rotation.from_matrix(m[:3, :3], renormalize=renormalize), m[:3, 3])

    @classmethod
    def from_rotvec(cls, rotvec: ArrayLike, translation: ArrayLike) -> "SE3Transform":
        return cls(Rotation.from_rotvec(rotvec), np.asarray(translation, dtype=float))

    @property
    def matrix(self) -> NDArray[np.float64]:
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix
        m[:3, 3] = self.translation
        return m

    def as_sim3(self) -> "Sim3Transform":
        return Sim3Transform(1.0, self.rotation, self.translation)

    def to_row_major(self) -> Tuple[float, ...]:
        return tuple(float(x) for x in self.matrix.ravel())

    def allclose(self, other: "AnyTransform", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))

    def __matmul__(self, other: "AnyTransform") -> "AnyTransform":
        return compose(self, other)

    def __repr__(self) -> str:
        return (
            f"SE3Transform(rotvec={np.round(self.rotation.as_rotvec(), 6).tolist()}, "
            f"t={np.round(self.translation, 6).tolist()})"
        )


@dataclass(frozen=True, eq=False)
class Sim3Transform:
    """Similarity transform; as a 4x4 matrix it is ``[[scale * R, t], [0, 1]]``."""

    scale: float
    rotation: Rotation
    translation: NDArray[np.float64]

    def __post_init__(self) -> None:
        scale = float(self.scale)
        if not np.isfinite(scale) or scale <= 0.0:
            raise InvalidTransformError(f"scale must be a positive finite number, got {scale}")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "translation", _vector3(self.translation, "translation"))

    @classmethod
    def identity(cls) -> "Sim3Transform":
        return cls(1.0, Rotation.identity(), np.zeros(3))

    @classmethod
    def pure_scale(cls, scale: float) -> "Sim3Transform":
        return cls(scale, Rotation.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: ArrayLike) -> "Sim3Transform":
        m = np.asarray(matrix, dtype=float).reshape(4, 4)
        block = m[:3, :3]
        det = np.linalg.det(block)
        if det <= 0.0:
            raise InvalidTransformError("similarity block must have a positive determinant")
        scale = float(np.cbrt(det))
        return cls(scale, Rotation(project_to_so3(block / scale)), m[:3, 3])

    @classmethod
    def from_row_major(cls, values: Sequence[float]) -> "Sim3Transform":
        if len(values) != 16:
            raise InvalidTransformError(f"expected 16 values, got {len(values)}")
        return cls.from_matrix(np.asarray(values, dtype=float).reshape(4, 4))

    @property
    def matrix(self) -> NDArray[np.float64]:
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation.matrix
        m[:3, 3] = self.translation
        return m

    def to_row_major(self) -> Tuple[float, ...]:
        return tuple(float(x) for x in self.matrix.ravel())

    def rigid(self) -> SE3Transform:
        """Drop the scale, keeping rotation and translation."""
        return SE3Transform(self.rotation, self.translation)

    def allclose(self, other: "AnyTransform", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))

    def __matmul__(self, other: "AnyTransform") -> "Sim3Transform":
        return as_sim3(compose(self, other))

    def __repr__(self) -> str:
        return (
            f"Sim3Transform(scale={self.scale:.6g}, "
            f"rotvec={np.round(self.rotation.as_rotvec(), 6).tolist()}, "
            f"t={np.round(self.translation, 6).tolist()})"
        )


AnyTransform = Union[SE3Transform, Sim3Transform]


def as_sim3(t: AnyTransform) -> Sim3Transform:
    return t if isinstance(t, Sim3Transform) else t.as_sim3()


@overload
def compose(a: SE3Transform, b: SE3Transform) -> SE3Transform: ...


@overload
def compose(a: AnyTransform, b: AnyTransform) -> AnyTransform: ...


def compose(a: AnyTransform, b: AnyTransform) -> AnyTransform:
    """``a`` after ``b``: points go through ``b`` first."""
    rotation = a.rotation @ b.rotation
    translation = a.scale * (a.rotation.matrix @ b.translation) + a.translation
    if isinstance(a, SE3Transform) and isinstance(b, SE3Transform):
        return SE3Transform(rotation, translation)
    return Sim3Transform(a.scale * b.scale, rotation, translation)


def compose_all(transforms: Iterable[AnyTransform]) -> AnyTransform:
    """Left-to-right product; the last transform acts first."""
    out: Optional[AnyTransform] = None
    for t in transforms:
        out = t if out is None else compose(out, t)
    if out is None:
        return SE3Transform.identity()
    return out


@overload
def inverse(t: SE3Transform) -> SE3Transform: ...


@overload
def inverse(t: Sim3Transform) -> Sim3Transform: ...


def inverse(t: AnyTransform) -> AnyTransform:
    rt = t.rotation.inverse()
    translation = -(rt.matrix @ t.translation) / t.scale
    if isinstance(t, SE3Transform):
        return SE3Transform(rt, translation)
    return Sim3Transform(1.0 / t.scale, rt, translation)


def transform_point(t: AnyTransform, p: ArrayLike) -> NDArray[np.float64]:
    return t.scale * (t.rotation.matrix @ _vector3(p, "point")) + t.translation


def transform_points(t: AnyTransform, points: ArrayLike) -> NDArray[np.float64]:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return t.scale * (pts @ t.rotation.matrix.T) + t.translation


def transform_cloud(t: AnyTransform, cloud: PointCloud) -> PointCloud:
    return PointCloud(transform_points(t, cloud.points))


def scale_translation(t: AnyTransform, factor: float) -> SE3Transform:
    """Rigid transform with the translation multiplied by ``factor``.

    Lifts a pose expressed in one agent's monocular units into units ``factor`` times larger.
    """
    return SE3Transform(t.rotation, factor * t.translation)


def relative(a: AnyTransform, b: AnyTransform) -> AnyTransform:
    """``inverse(a) ∘ b``: the pose of ``b`` seen from ``a``."""
    return compose(inverse(a), b)
