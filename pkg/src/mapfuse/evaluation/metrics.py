"""Trajectory error metrics: RMSE of positions after optional alignment, and relative pose
error over consecutive pose increments."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Sequence

import numpy as np
from numpy.typing import NDArray

from mapfuse.exceptions import LengthMismatchError
from mapfuse.geometry import AnyTransform, Rotation, Sim3Transform, umeyama_alignment

logger = logging.getLogger("mapfuse.evaluation")
logger.addHandler(logging.NullHandler())

MIN_ALIGNMENT_POSES = 3


class AlignmentMode(str, Enum):
    Unaligned = "none"
    SE3 = "se3"
    Sim3 = "sim3"

    @classmethod
    def parse(cls, text: str) -> "AlignmentMode":
        for mode in cls:
            if text.lower() in (mode.value, mode.name.lower()):
                return mode
        raise ValueError(f"unknown alignment mode {text!r}")


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    median: float
    max: float
    rmse: float

    @classmethod
    def of(cls, values: NDArray[np.float64]) -> "ErrorStats":
        v = np.abs(np.asarray(values, dtype=float).reshape(-1))
        if v.size == 0:
            return cls(0.0, 0.0, 0.0, 0.0)
        return cls(
            float(v.mean()), float(np.median(v)), float(v.max()), float(np.sqrt(np.mean(v * v)))
        )

    def to_dict(self) -> Dict[str, float]:
        return {"mean": self.mean, "median": self.median, "max": self.max, "rmse": self.rmse}


@dataclass(frozen=True)
class TrajectoryMetric:
    rmse: float
    rpe_translation: ErrorStats
    rpe_rotation: ErrorStats
    alignment_used: AlignmentMode
    alignment: Sim3Transform

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rmse": self.rmse,
            "rpe_translation": self.rpe_translation.to_dict(),
            "rpe_rotation": self.rpe_rotation.to_dict(),
            "alignment": self.alignment_used.value,
            "scale": self.alignment.scale,
        }


def positions_of(poses: Sequence[AnyTransform]) -> NDArray[np.float64]:
    return np.array([p.translation for p in poses], dtype=float).reshape(-1, 3)


def rotations_of(poses: Sequence[AnyTransform]) -> NDArray[np.float64]:
    return np.array([p.rotation.matrix for p in poses], dtype=float).reshape(-1, 3, 3)


def trajectory_extent(positions: NDArray[np.float64]) -> float:
    """Diagonal of the axis-aligned bounding box."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    if p.shape[0] == 0:
        return 0.0
    return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def align_positions(
    estimated: NDArray[np.float64], reference: NDArray[np.float64], mode: AlignmentMode
) -> Sim3Transform:
    """Transform taking ``estimated`` onto ``reference`` in the least-squares sense.

    Fewer than three poses are aligned by their centroids alone, with no rotation or scale.
    """
    if mode is AlignmentMode.Unaligned:
        return Sim3Transform.identity()
    est = np.asarray(estimated, dtype=float).reshape(-1, 3)
    ref = np.asarray(reference, dtype=float).reshape(-1, 3)
    if est.shape[0] < MIN_ALIGNMENT_POSES:
        if est.shape[0] == 0:
            return Sim3Transform.identity()
        logger.debug("%d poses: aligning by centroid only", est.shape[0])
        return Sim3Transform(1.0, Rotation.identity(), ref.mean(axis=0) - est.mean(axis=0))
    return umeyama_alignment(est, ref, with_scale=mode is AlignmentMode.Sim3)


def position_rmse(estimated: NDArray[np.float64], reference: NDArray[np.float64]) -> float:
    diff = np.asarray(estimated, dtype=float) - np.asarray(reference, dtype=float)
    if diff.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def relative_pose_errors(
    rot_est: NDArray[np.float64],
    pos_est: NDArray[np.float64],
    rot_ref: NDArray[np.float64],
    pos_ref: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Translation and rotation error of each consecutive increment ``k -> k+1``."""
    n = pos_est.shape[0]
    trans = np.zeros(max(n - 1, 0))
    rot = np.zeros(max(n - 1, 0))
    for k in range(n - 1):
        d_est = rot_est[k].T @ (pos_est[k + 1] - pos_est[k])
        d_ref = rot_ref[k].T @ (pos_ref[k + 1] - pos_ref[k])
        r_est = rot_est[k].T @ rot_est[k + 1]
        r_ref = rot_ref[k].T @ rot_ref[k + 1]
        trans[k] = np.linalg.norm(d_est - d_ref)
        cos = (np.trace(r_ref.T @ r_est) - 1.0) / 2.0
        rot[k] = float(np.arccos(np.clip(cos, -1.0, 1.0)))
    return trans, rot


def metric_rmse(
    estimated: Sequence[AnyTransform],
    reference: Sequence[AnyTransform],
    alignment: AlignmentMode = AlignmentMode.Unaligned,
) -> TrajectoryMetric:
    """Index-associated trajectory comparison.

    The alignment is estimated on positions and applied to the estimated poses before both
    the RMSE and the relative pose error are computed.
    """
    if len(estimated) != len(reference):
        logger.error("Trajectory lengths differ: %d vs %d", len(estimated), len(reference))
        raise LengthMismatchError(
            f"estimated trajectory has {len(estimated)} poses, reference has {len(reference)}"
        )
    pos_est, pos_ref = positions_of(estimated), positions_of(reference)
    align = align_positions(pos_est, pos_ref, alignment)
    aligned_pos = align.scale * pos_est @ align.rotation.matrix.T + align.translation
    aligned_rot = np.einsum("ij,kjl->kil", align.rotation.matrix, rotations_of(estimated))
    trans, rot = relative_pose_errors(aligned_rot, aligned_pos, rotations_of(reference), pos_ref)
    return TrajectoryMetric(
        rmse=position_rmse(aligned_pos, pos_ref),
        rpe_translation=ErrorStats.of(trans),
        rpe_rotation=ErrorStats.of(rot),
        alignment_used=alignment,
        alignment=align,
    )


@dataclass(frozen=True)
class MapError:
    """Merged-trajectory RMSE against ground truth after a similarity alignment."""

    rmse: float
    extent: float

    @property
    def relative(self) -> float:
        return self.rmse / self.extent if self.extent > 0 else 0.0


def merged_positions_error(
    merged: Dict[str, NDArray[np.float64]], truth: Dict[str, NDArray[np.float64]]
) -> MapError:
    """Positions of every agent stacked in ``sorted`` agent order and compared as one set.

    A single similarity aligns the whole merged map, so any inter-agent misregistration
    remains in the error.
    """
    agents = sorted(merged)
    missing = [a for a in agents if a not in truth]
    if missing:
        raise KeyError(f"no ground truth for agents {missing}")
    est = np.vstack([merged[a] for a in agents])
    ref = np.vstack([truth[a] for a in agents])
    if est.shape != ref.shape:
        raise LengthMismatchError(f"merged map has {est.shape[0]} poses, truth {ref.shape[0]}")
    align = align_positions(est, ref, AlignmentMode.Sim3)
    aligned = align.scale * est @ align.rotation.matrix.T + align.translation
    return MapError(position_rmse(aligned, ref), trajectory_extent(ref))
