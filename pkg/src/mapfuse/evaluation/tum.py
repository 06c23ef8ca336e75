"""TUM trajectory files: ``timestamp tx ty tz qx qy qz qw`` per line, ``#`` comments."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from mapfuse.exceptions import LengthMismatchError
from mapfuse.geometry import AnyTransform, Rotation, SE3Transform

logger = logging.getLogger("mapfuse.evaluation")
logger.addHandler(logging.NullHandler())

PathLike = Union[str, Path]


def format_tum(poses: Sequence[AnyTransform], rate_hz: float = 10.0) -> str:
    """One line per pose; the timestamp of keyframe ``k`` is ``k / rate_hz``."""
    if rate_hz <= 0:
        raise ValueError("rate_hz must be positive")
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for k, pose in enumerate(poses):
        values = [k / rate_hz, *pose.translation, *pose.rotation.as_quat()]
        lines.append(" ".join(f"{v:.9f}" for v in values))
    return "\n".join(lines) + "\n"


def write_tum(path: PathLike, poses: Sequence[AnyTransform], rate_hz: float = 10.0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_tum(poses, rate_hz), encoding="utf-8")
    logger.debug("Wrote %d poses to %s", len(poses), path)
    return path


def parse_tum(text: str) -> Tuple[List[float], List[SE3Transform]]:
    stamps: List[float] = []
    poses: List[SE3Transform] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 8:
            raise ValueError(f"TUM line {lineno}: expected 8 values, got {len(parts)}")
        values = [float(p) for p in parts]
        stamps.append(values[0])
        poses.append(SE3Transform(Rotation.from_quat(values[4:8]), np.array(values[1:4])))
    return stamps, poses


def read_tum(path: PathLike) -> Tuple[List[float], List[SE3Transform]]:
    return parse_tum(Path(path).read_text(encoding="utf-8"))


def associate(
    stamps_a: Sequence[float], stamps_b: Sequence[float], max_difference: float = 0.02
) -> List[Tuple[int, int]]:
    """Greedy nearest-timestamp pairing, each index used at most once."""
    candidates = sorted(
        (abs(a - b), i, j)
        for i, a in enumerate(stamps_a)
        for j, b in enumerate(stamps_b)
        if abs(a - b) < max_difference
    )
    used_a, used_b, pairs = set(), set(), []
    for _, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    return sorted(pairs)


def associated_poses(
    a: Tuple[Sequence[float], Sequence[SE3Transform]],
    b: Tuple[Sequence[float], Sequence[SE3Transform]],
    max_difference: float = 0.02,
) -> Tuple[List[SE3Transform], List[SE3Transform]]:
    pairs = associate(a[0], b[0], max_difference)
    if not pairs:
        raise LengthMismatchError("no timestamps could be associated")
    return [a[1][i] for i, _ in pairs], [b[1][j] for _, j in pairs]
