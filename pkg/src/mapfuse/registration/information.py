"""Closed-form ICP covariance and its inverse, the edge information matrix.

The cost is ``J(x) = sum |Exp(w) (R0 P_i + t0) + t - Q_i|^2`` for the 6-vector
``x = [t, w]`` (translation first, then the axis-angle perturbation) around the solution
``(R0, t0)``. The covariance is ``H^-1 (sum M_i C_i M_i^T) H^-1`` with ``H = d2J/dx2`` and
``M_i = d2J/dx dz_i`` for each correspondence ``z_i = (P_i, Q_i)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation as ScipyRotation

from mapfuse.config import Settings, resolve_settings
from mapfuse.exceptions import InsufficientMatchesError, SingularHessianError
from mapfuse.geometry import SE3Transform, skew, transform_points

logger = logging.getLogger("mapfuse.registration")
logger.addHandler(logging.NullHandler())

SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class InfoParams:
    noise_floor: float = 1e-3
    condition_limit: float = 1e10

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None) -> "InfoParams":
        s = resolve_settings(settings)
        return cls(noise_floor=s["INFO_NOISE_FLOOR"], condition_limit=s["INFO_CONDITION_LIMIT"])


@dataclass(frozen=True, eq=False)
class InformationMatrix:
    """6x6 symmetric PSD weight, ordered x, y, z, a, b, c."""

    matrix: NDArray[np.float64]

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.shape != (6, 6):
            raise ValueError(f"information matrix must be 6x6, got {m.shape}")
        scale = max(1.0, float(np.abs(m).max()))
        if not np.allclose(m, m.T, rtol=0.0, atol=SYMMETRY_TOL * scale):
            raise ValueError("information matrix is not symmetric")
        m = 0.5 * (m + m.T)
        if np.linalg.eigvalsh(m).min() < -SYMMETRY_TOL * scale:
            raise ValueError("information matrix is not positive semi-definite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def diagonal(cls, translation: float, rotation: float) -> "InformationMatrix":
        return cls(np.diag([translation] * 3 + [rotation] * 3))

    @property
    def covariance(self) -> NDArray[np.float64]:
        return np.linalg.inv(self.matrix)

    def scaled(self, factor: float) -> "InformationMatrix":
        return InformationMatrix(self.matrix * factor)

    def upper_triangle(self) -> Tuple[float, ...]:
        return tuple(float(v) for v in self.matrix[np.triu_indices(6)])

    @classmethod
    def from_upper_triangle(cls, values: ArrayLike) -> "InformationMatrix":
        v = np.asarray(values, dtype=float).reshape(-1)
        if v.size != 21:
            raise ValueError(f"upper triangle of a 6x6 matrix has 21 entries, got {v.size}")
        m = np.zeros((6, 6))
        m[np.triu_indices(6)] = v
        return cls(m + np.triu(m, 1).T)


def _prepare(
    moving: ArrayLike, fixed: ArrayLike, solution: SE3Transform
) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    p = np.asarray(moving, dtype=float).reshape(-1, 3)
    q = np.asarray(fixed, dtype=float).reshape(-1, 3)
    if p.shape != q.shape:
        raise ValueError(f"correspondence sets differ in shape: {p.shape} vs {q.shape}")
    if p.shape[0] < 3:
        raise InsufficientMatchesError("the information matrix needs at least 3 correspondences")
    aligned = transform_points(solution, p)
    return p, aligned, aligned - q


def icp_cost(x: ArrayLike, moving: ArrayLike, fixed: ArrayLike, solution: SE3Transform) -> float:
    """``J`` at the perturbation ``x = [t, w]`` around ``solution``."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(moving, dtype=float).reshape(-1, 3)
    q = np.asarray(fixed, dtype=float).reshape(-1, 3)
    r = ScipyRotation.from_rotvec(x[3:]).as_matrix()
    f = transform_points(solution, p) @ r.T + x[:3] - q
    return float(np.sum(f * f))


def cost_hessian(moving: ArrayLike, fixed: ArrayLike, solution: SE3Transform) -> NDArray[np.float64]:
    """``d2J/dx2`` at ``x = 0``."""
    _, aligned, g = _prepare(moving, fixed, solution)
    h = np.zeros((6, 6))
    for pp, gg in zip(aligned, g):
        jac = np.hstack([np.eye(3), -skew(pp)])
        h += 2.0 * jac.T @ jac
        h[3:, 3:] += np.outer(pp, gg) + np.outer(gg, pp) - 2.0 * float(gg @ pp) * np.eye(3)
    return h


def cost_mixed(
    moving: ArrayLike, fixed: ArrayLike, solution: SE3Transform
) -> NDArray[np.float64]:
    """``d2J/dx dz`` at ``x = 0``, shape (n, 6, 6): columns 0-2 for P_i, 3-5 for Q_i."""
    _, aligned, g = _prepare(moving, fixed, solution)
    r0 = solution.rotation.matrix
    out = np.zeros((aligned.shape[0], 6, 6))
    for k, (pp, gg) in enumerate(zip(aligned, g)):
        jac = np.hstack([np.eye(3), -skew(pp)])
        out[k, :3, :3] = 2.0 * r0
        out[k, 3:, :3] = 2.0 * (skew(pp) - skew(gg)) @ r0
        out[k, :, 3:] = -2.0 * jac.T
    return out


def icp_covariance(
    moving: ArrayLike,
    fixed: ArrayLike,
    solution: SE3Transform,
    noise_sigma: float,
    condition_limit: float = 1e10,
) -> NDArray[np.float64]:
    """Covariance of the solution under isotropic per-coordinate measurement noise."""
    h = cost_hessian(moving, fixed, solution)
    cond = np.linalg.cond(h)
    if not np.isfinite(cond) or cond > condition_limit:
        raise SingularHessianError(f"ICP cost Hessian is singular (condition {cond:.3g})")
    mixed = cost_mixed(moving, fixed, solution)
    middle = noise_sigma**2 * np.einsum("kij,klj->il", mixed, mixed)
    h_inv = np.linalg.inv(h)
    cov = h_inv @ middle @ h_inv
    return 0.5 * (cov + cov.T)


def icp_information_matrix(
    moving: ArrayLike,
    fixed: ArrayLike,
    solution: SE3Transform,
    noise_sigma: float = 0.0,
    params: Optional[InfoParams] = None,
) -> InformationMatrix:
    """Inverse of the closed-form covariance; ``noise_sigma`` is floored at ``noise_floor``."""
    params = params or InfoParams()
    sigma = max(float(noise_sigma), params.noise_floor)
    cov = icp_covariance(moving, fixed, solution, sigma, params.condition_limit)
    info = np.linalg.inv(cov)
    info = 0.5 * (info + info.T)
    logger.debug("Information matrix trace %.4g from %d pairs", np.trace(info), len(np.atleast_2d(moving)))
    return InformationMatrix(info)


def right_perturbation_information(
    info: InformationMatrix, measurement: SE3Transform
) -> InformationMatrix:
    """Re-express an information matrix from the left perturbation ``(Exp(w), t) * Z`` used
    above to the right perturbation ``Z * (Exp(phi), rho)`` used by the pose graph."""
    rt = measurement.rotation.matrix.T
    a = np.zeros((6, 6))
    a[:3, :3] = rt
    a[:3, 3:] = -rt @ skew(measurement.translation)
    a[3:, 3:] = rt
    a_inv = np.linalg.inv(a)
    m = a_inv.T @ info.matrix @ a_inv
    return InformationMatrix(0.5 * (m + m.T))
