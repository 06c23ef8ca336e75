from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation as _ScipyRotation

from mapfuse.exceptions import InvalidTransformError

ORTHONORMAL_TOL = 1e-9
DET_TOL = 1e-9


def skew(v: ArrayLike) -> NDArray[np.float64]:
    """Cross-product matrix: ``skew(a) @ b == np.cross(a, b)``."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def project_to_so3(matrix: ArrayLike) -> NDArray[np.float64]:
    """Nearest rotation in Frobenius norm (orthogonal polar factor)."""
    m = np.asarray(matrix, dtype=float).reshape(3, 3)
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _frozen(a: ArrayLike) -> NDArray[np.float64]:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Rotation:
    """Orthonormal 3x3 rotation; acts on column vectors."""

    matrix: NDArray[np.float64]

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise InvalidTransformError(f"rotation must be 3x3, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidTransformError("rotation has non-finite entries")
        err = np.linalg.norm(m.T @ m - np.eye(3))
        if err > ORTHONORMAL_TOL:
            raise InvalidTransformError(f"rotation is not orthonormal (|R^T R - I| = {err:.3e})")
        det = np.linalg.det(m)
        if abs(det - 1.0) > DET_TOL:
            raise InvalidTransformError(f"rotation determinant {det:.12f} is not +1")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    @classmethod
    def from_matrix(cls, matrix: ArrayLike, *, renormalize: bool = False) -> "Rotation":
        m = np.asarray(matrix, dtype=float)
        return cls(project_to_so3(m) if renormalize else m)

    @classmethod
    def from_rotvec(cls, rotvec: ArrayLike) -> "Rotation":
        return cls(_ScipyRotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix())

    @classmethod
    def from_quat(cls, xyzw: ArrayLike) -> "Rotation":
        return cls(_ScipyRotation.from_quat(np.asarray(xyzw, dtype=float)).as_matrix())

    @classmethod
    def about_z(cls, angle: float) -> "Rotation":
        c, s = np.cos(angle), np.sin(angle)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]))

    @classmethod
    def random(cls, rng: Optional[np.random.Generator] = None) -> "Rotation":
        rng = rng if rng is not None else np.random.default_rng()
        return cls(_ScipyRotation.random(random_state=rng).as_matrix())

    def as_rotvec(self) -> NDArray[np.float64]:
        return _ScipyRotation.from_matrix(self.matrix).as_rotvec()

    def as_quat(self) -> NDArray[np.float64]:
        """Unit quaternion in (x, y, z, w) order."""
        return _ScipyRotation.from_matrix(self.matrix).as_quat()

    def angle(self) -> float:
        return float(np.linalg.norm(self.as_rotvec()))

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T)

    def renormalized(self) -> "Rotation":
        return Rotation(project_to_so3(self.matrix))

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        p = np.asarray(points, dtype=float)
        return p @ self.matrix.T

    def __matmul__(self, other: "Rotation") -> "Rotation":
        m = self.matrix @ other.matrix
        try:
            return Rotation(m)
        except InvalidTransformError:
            return Rotation(project_to_so3(m))

    def allclose(self, other: "Rotation", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        return f"Rotation(rotvec={np.round(self.as_rotvec(), 6).tolist()})"
