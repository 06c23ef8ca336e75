"""Normalized eight-point relative pose with cheirality disambiguation."""

from __future__ import annotations

import logging
from typing import Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from mapfuse.exceptions import DegenerateGeometryError, InsufficientMatchesError
from mapfuse.geometry import Rotation, SE3Transform, skew

logger = logging.getLogger("mapfuse.scale")
logger.addHandler(logging.NullHandler())

_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def _homogeneous(points: ArrayLike) -> NDArray[np.float64]:
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or x.shape[1] not in (2, 3):
        raise ValueError(f"image points must have shape (n, 2) or (n, 3), got {x.shape}")
    if x.shape[1] == 2:
        return np.hstack([x, np.ones((x.shape[0], 1))])
    return x / x[:, 2:3]


def _normalizer(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Hartley conditioning: centroid to the origin, mean distance sqrt(2)."""
    c = x[:, :2].mean(axis=0)
    d = np.linalg.norm(x[:, :2] - c, axis=1).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def project(points_3d: ArrayLike) -> NDArray[np.float64]:
    """Normalized image coordinates of camera-frame points."""
    p = np.asarray(points_3d, dtype=float).reshape(-1, 3)
    return p[:, :2] / p[:, 2:3]


def essential_matrix(
    x_s: ArrayLike, x_t: ArrayLike, condition_limit: float = 1e8
) -> NDArray[np.float64]:
    """E with ``x_s^T E x_t = 0``, projected onto the essential manifold."""
    hs, ht = _homogeneous(x_s), _homogeneous(x_t)
    if hs.shape != ht.shape:
        raise ValueError("source and target image points differ in count")
    n = hs.shape[0]
    if n < 8:
        raise InsufficientMatchesError(f"eight-point needs at least 8 correspondences, got {n}")
    ns, nt = _normalizer(hs), _normalizer(ht)
    a = (hs @ ns.T)[:, :, None] * (ht @ nt.T)[:, None, :]
    design = a.reshape(n, 9)
    _, sv, vt = np.linalg.svd(design)
    if sv[7] <= sv[0] / condition_limit:
        raise DegenerateGeometryError(
            f"eight-point design matrix is rank deficient (condition {sv[0] / max(sv[7], 1e-300):.3g})"
        )
    e = ns.T @ vt[-1].reshape(3, 3) @ nt
    u, _, vt = np.linalg.svd(e)
    return u @ np.diag([1.0, 1.0, 0.0]) @ vt


def _depths(
    hs: NDArray[np.float64], ht: NDArray[np.float64], r: NDArray[np.float64], t: NDArray[np.float64]
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Least-squares depths with ``d_s x_s = d_t R x_t + t`` per correspondence."""
    rx = ht @ r.T
    # 2x2 normal equations per point
    a11 = np.einsum("ij,ij->i", hs, hs)
    a12 = -np.einsum("ij,ij->i", hs, rx)
    a22 = np.einsum("ij,ij->i", rx, rx)
    b1 = hs @ t
    b2 = -(rx @ t)
    det = a11 * a22 - a12 * a12
    det = np.where(np.abs(det) < 1e-300, 1e-300, det)
    d_s = (a22 * b1 - a12 * b2) / det
    d_t = (a11 * b2 - a12 * b1) / det
    return d_s, d_t


def decompose_essential(
    e: NDArray[np.float64], x_s: ArrayLike, x_t: ArrayLike
) -> SE3Transform:
    """The (R, t) among the four candidates that puts most points in front of both cameras."""
    hs, ht = _homogeneous(x_s), _homogeneous(x_t)
    u, _, vt = np.linalg.svd(e)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    best: Tuple[int, NDArray[np.float64], NDArray[np.float64]] = (-1, np.eye(3), np.zeros(3))
    for r in (u @ _W @ vt, u @ _W.T @ vt):
        for t in (u[:, 2], -u[:, 2]):
            d_s, d_t = _depths(hs, ht, r, t)
            front = int(np.count_nonzero((d_s > 0) & (d_t > 0)))
            if front > best[0]:
                best = (front, r, t)
    _, r, t = best
    return SE3Transform(Rotation.from_matrix(r, renormalize=True), t / np.linalg.norm(t))


def eight_point_relative_pose(
    x_s: ArrayLike, x_t: ArrayLike, condition_limit: float = 1e8
) -> SE3Transform:
    """Pose of the target camera in the source camera frame, translation of unit length.

    ``x_s`` and ``x_t`` are matching normalized image coordinates, shape (n, 2) or (n, 3).
    """
    e = essential_matrix(x_s, x_t, condition_limit)
    pose = decompose_essential(e, x_s, x_t)
    logger.debug("Eight-point: rotation angle %.6f rad", pose.rotation.angle())
    return pose


def epipolar_residuals(pose: SE3Transform, x_s: ArrayLike, x_t: ArrayLike) -> NDArray[np.float64]:
    """Algebraic residuals ``x_s^T [t]x R x_t`` of a pose against image correspondences."""
    hs, ht = _homogeneous(x_s), _homogeneous(x_t)
    e = skew(pose.translation) @ pose.rotation.matrix
    return np.einsum("ij,ij->i", hs @ e, ht)
