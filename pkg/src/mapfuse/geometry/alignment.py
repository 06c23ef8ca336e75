from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike

from mapfuse.exceptions import DegenerateGeometryError, InsufficientMatchesError

from .rotation import Rotation, project_to_so3
from .transforms import SE3Transform, Sim3Transform


def umeyama_alignment(src: ArrayLike, dst: ArrayLike, with_scale: bool = True) -> Sim3Transform:
    """Least-squares similarity (or rigid, scale 1) transform taking ``src`` onto ``dst``.

    Closed form via the SVD of the cross-covariance; reflections are suppressed.
    """
    x = np.asarray(src, dtype=float).reshape(-1, 3)
    y = np.asarray(dst, dtype=float).reshape(-1, 3)
    if x.shape != y.shape:
        raise ValueError(f"point sets differ in shape: {x.shape} vs {y.shape}")
    n = x.shape[0]
    if n < 3:
        raise InsufficientMatchesError(f"alignment needs at least 3 point pairs, got {n}")

    ux = x.mean(axis=0)
    uy = y.mean(axis=0)
    dx = x - ux
    dy = y - uy
    var_x = float((dx**2).sum() / n)
    if var_x <= 1e-300:
        raise DegenerateGeometryError("source points are coincident")

    sigma = dy.T @ dx / n
    u, d, vt = np.linalg.svd(sigma)
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    r = project_to_so3(u @ s @ vt)

    if with_scale:
        c = float((d * s.diagonal()).sum() / var_x)
        if c <= 0.0:
            raise DegenerateGeometryError("alignment produced a non-positive scale")
    else:
        c = 1.0
    t = uy - c * (r @ ux)
    return Sim3Transform(c, Rotation(r), t)


def rigid_alignment(src: ArrayLike, dst: ArrayLike) -> SE3Transform:
    """Kabsch: the rotation and translation taking ``src`` onto ``dst``."""
    return umeyama_alignment(src, dst, with_scale=False).rigid()
