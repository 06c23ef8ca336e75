from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from mapfuse.exceptions import InvalidTransformError


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Read-only (N, 3) array of finite points in the owning frame's length units."""

    points: NDArray[np.float64]

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidTransformError(f"cloud must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidTransformError("cloud has non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def centroid(self) -> NDArray[np.float64]:
        if len(self) == 0:
            raise InvalidTransformError("empty cloud has no centroid")
        return self.points.mean(axis=0)

    @property
    def extent(self) -> NDArray[np.float64]:
        if len(self) == 0:
            return np.zeros(3)
        return self.points.max(axis=0) - self.points.min(axis=0)

    @property
    def diameter(self) -> float:
        """Bounding-box diagonal."""
        return float(np.linalg.norm(self.extent))

    @property
    def bbox_volume(self) -> float:
        return float(np.prod(self.extent))

    def concat(self, *others: "PointCloud") -> "PointCloud":
        return PointCloud(np.vstack([self.points, *(o.points for o in others)]))

    def voxel_downsample(self, voxel: float) -> "PointCloud":
        """One point per occupied voxel: the mean of the points that fall in it."""
        if voxel <= 0:
            raise ValueError("voxel size must be positive")
        if len(self) == 0:
            return self
        keys = np.floor(self.points / voxel).astype(np.int64)
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        sums = np.zeros((counts.size, 3))
        np.add.at(sums, inverse, self.points)
        return PointCloud(sums / counts[:, None])

    def allclose(self, other: "PointCloud", atol: float = 1e-9) -> bool:
        return self.points.shape == other.points.shape and bool(
            np.allclose(self.points, other.points, rtol=0.0, atol=atol)
        )


def concat_clouds(clouds: Iterable[PointCloud]) -> PointCloud:
    clouds = list(clouds)
    if not clouds:
        return PointCloud.empty()
    return clouds[0].concat(*clouds[1:])


def as_points(value: "PointCloud | ArrayLike") -> NDArray[np.float64]:
    if isinstance(value, PointCloud):
        return value.points
    return np.asarray(value, dtype=float).reshape(-1, 3)
