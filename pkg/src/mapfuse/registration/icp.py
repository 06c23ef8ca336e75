"""Trimmed, truncated point-to-point ICP.

The target cloud moves, the source cloud is fixed in a k-d tree. The distance gate is set once
from the initial residuals, so the cost (sum of the best ``trim_fraction`` truncated squared
residuals) cannot increase under the closed-form update; a guard stops the loop if round-off
says otherwise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from mapfuse.config import Settings, resolve_settings
from mapfuse.exceptions import TooFewPointsError
from mapfuse.geometry import (
    PointCloud,
    SE3Transform,
    compose,
    rigid_alignment,
    transform_points,
)
from mapfuse.geometry.cloud import as_points

logger = logging.getLogger("mapfuse.registration")
logger.addHandler(logging.NullHandler())

CloudLike = Union[PointCloud, ArrayLike]


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 100
    relative_tolerance: float = 1e-8
    absolute_cost: float = 1e-16
    trim_fraction: float = 0.9
    gate_factor: float = 3.0
    min_points: int = 50
    reciprocal: bool = False
    sanity_fraction: float = 0.1

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None) -> "IcpParams":
        s = resolve_settings(settings)
        return cls(
            max_iterations=s["ICP_MAX_ITERATIONS"],
            relative_tolerance=s["ICP_RELATIVE_TOLERANCE"],
            absolute_cost=s["ICP_ABSOLUTE_COST"],
            trim_fraction=s["ICP_TRIM_FRACTION"],
            gate_factor=s["ICP_GATE_FACTOR"],
            min_points=s["ICP_MIN_POINTS"],
            reciprocal=s["ICP_RECIPROCAL"],
            sanity_fraction=s["ICP_SANITY_FRACTION"],
        )


@dataclass(frozen=True)
class IcpResult:
    """``transform`` maps the target cloud onto the source cloud."""

    transform: SE3Transform
    final_cost: float
    iterations: int
    converged: bool
    correspondences_used: int
    rms: float
    trace: Tuple[float, ...]
    gate: float

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.trace, self.trace[1:]))


@dataclass(frozen=True)
class Correspondences:
    moving: NDArray[np.float64]
    fixed: NDArray[np.float64]
    distances: NDArray[np.float64]


class _Matcher:
    def __init__(self, source: NDArray[np.float64], params: IcpParams, gate: float = 0.0) -> None:
        self.source = source
        self.tree = cKDTree(source)
        self.params = params
        self.gate = gate

    def query(
        self, moved: NDArray[np.float64]
    ) -> Tuple[NDArray[np.float64], NDArray[np.int64]]:
        d, idx = self.tree.query(moved)
        return np.asarray(d, dtype=float), np.asarray(idx, dtype=np.int64)

    def cost(self, d: NDArray[np.float64]) -> float:
        k = math.ceil(self.params.trim_fraction * d.size)
        truncated = np.minimum(d * d, self.gate * self.gate)
        return float(np.partition(truncated, k - 1)[:k].sum()) if k else 0.0

    def select(
        self, moved: NDArray[np.float64], d: NDArray[np.float64], idx: NDArray[np.int64]
    ) -> NDArray[np.int64]:
        """Rows among the best ``trim_fraction`` that fall inside the gate."""
        k = math.ceil(self.params.trim_fraction * d.size)
        order = np.argsort(d, kind="stable")[:k]
        rows = order[d[order] < self.gate]
        if self.params.reciprocal and rows.size:
            back = cKDTree(moved).query(self.source[idx[rows]])[1]
            rows = rows[np.asarray(back) == rows]
        return rows


def _check_size(points: NDArray[np.float64], what: str, params: IcpParams) -> None:
    if points.shape[0] < params.min_points:
        raise TooFewPointsError(
            f"{what} cloud has {points.shape[0]} points, ICP needs {params.min_points}"
        )


def icp_point_to_point(
    source: CloudLike,
    target: CloudLike,
    params: Optional[IcpParams] = None,
    initial: Optional[SE3Transform] = None,
) -> IcpResult:
    params = params or IcpParams()
    src, tgt = as_points(source), as_points(target)
    _check_size(src, "source", params)
    _check_size(tgt, "target", params)

    transform = initial if initial is not None else SE3Transform.identity()
    matcher = _Matcher(src, params)
    moved = transform_points(transform, tgt)
    d, idx = matcher.query(moved)
    diameter = PointCloud(src).diameter
    matcher.gate = max(params.gate_factor * float(np.median(d)), 1e-9 * diameter)
    cost = matcher.cost(d)
    trace = [cost]
    converged = False
    used = 0
    iterations = 0

    for iterations in range(1, params.max_iterations + 1):
        rows = matcher.select(moved, d, idx)
        if rows.size < 3:
            logger.warning("ICP stopped with %d usable correspondences", rows.size)
            break
        used = int(rows.size)
        step = rigid_alignment(moved[rows], src[idx[rows]])
        candidate = compose(step, transform)
        cand_moved = transform_points(candidate, tgt)
        cand_d, cand_idx = matcher.query(cand_moved)
        cand_cost = matcher.cost(cand_d)
        if cand_cost > cost:
            logger.debug("ICP step would raise the cost (%.3e > %.3e); stopping", cand_cost, cost)
            converged = True
            break
        change = (cost - cand_cost) / cost if cost > 0 else 0.0
        transform, moved, d, idx, cost = candidate, cand_moved, cand_d, cand_idx, cand_cost
        trace.append(cost)
        if cost <= params.absolute_cost or change < params.relative_tolerance:
            converged = True
            break

    rms = float(np.sqrt(np.mean(d * d)))
    if not converged:
        logger.info("ICP reached the iteration cap (%d) at cost %.3e", params.max_iterations, cost)
    return IcpResult(
        transform=transform,
        final_cost=cost,
        iterations=iterations,
        converged=converged,
        correspondences_used=used,
        rms=rms,
        trace=tuple(trace),
        gate=matcher.gate,
    )


def icp_correspondences(
    result: IcpResult, source: CloudLike, target: CloudLike, params: Optional[IcpParams] = None
) -> Correspondences:
    """Pairs the final transform uses: raw target point, matched source point, distance."""
    params = params or IcpParams()
    src, tgt = as_points(source), as_points(target)
    matcher = _Matcher(src, params, result.gate)
    moved = transform_points(result.transform, tgt)
    d, idx = matcher.query(moved)
    rows = matcher.select(moved, d, idx)
    return Correspondences(moving=tgt[rows], fixed=src[idx[rows]], distances=d[rows])


def registration_sane(result: IcpResult, source: CloudLike, sanity_fraction: float = 0.1) -> bool:
    """Post-ICP RMS within ``sanity_fraction`` of the source diameter."""
    limit = sanity_fraction * PointCloud(as_points(source)).diameter
    ok = result.rms <= limit
    if not ok:
        logger.warning("ICP result fails the sanity check: rms %.4g > %.4g", result.rms, limit)
    return ok
