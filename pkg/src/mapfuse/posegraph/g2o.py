"""g2o text import and export.

Lines written::

    # FRAME <id> <agent> <index>
    VERTEX_SE3:QUAT <id> x y z qx qy qz qw
    VERTEX_SIM3:QUAT <id> x y z qx qy qz qw s
    FIX <id>
    EDGE_SE3:QUAT <from> <to> x y z qx qy qz qw <21 upper-triangular information values>

``VERTEX_SIM3:QUAT`` is a mapfuse extension carrying the agent scale of a node. ``FRAME``
comments keep the agent/keyframe identity of each integer id; files without them load with
every node under the agent ``"g2o"``. g2o weights the quaternion vector part, which is half
the rotation vector for small angles, so rotation blocks are rescaled on the way in and out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import numpy as np

from mapfuse.exceptions import PoseGraphError
from mapfuse.geometry import FrameId, Rotation, SE3Transform
from mapfuse.registration import InformationMatrix

from .graph import Edge, EdgeKind, PoseGraph

logger = logging.getLogger("mapfuse.posegraph")
logger.addHandler(logging.NullHandler())

PathLike = Union[str, Path]

DEFAULT_AGENT = "g2o"
_QUAT_JACOBIAN = np.diag([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


@dataclass
class G2oDocument:
    graph: PoseGraph
    scales: Dict[FrameId, float] = field(default_factory=dict)


def _pose_fields(pose: SE3Transform) -> List[str]:
    values = list(pose.translation) + list(pose.rotation.as_quat())
    return [f"{v:.17g}" for v in values]


def _pose_from(values: List[str]) -> SE3Transform:
    xyz = [float(v) for v in values[0:3]]
    quat = [float(v) for v in values[3:7]]
    return SE3Transform(Rotation.from_quat(quat), np.array(xyz))


def to_g2o_information(info: InformationMatrix) -> InformationMatrix:
    return InformationMatrix(_QUAT_JACOBIAN @ info.matrix @ _QUAT_JACOBIAN)


def from_g2o_information(info: InformationMatrix) -> InformationMatrix:
    inv = np.linalg.inv(_QUAT_JACOBIAN)
    return InformationMatrix(inv @ info.matrix @ inv)


def format_g2o(graph: PoseGraph, scales: Optional[Mapping[FrameId, float]] = None) -> str:
    scales = scales or {}
    ids = {frame: k for k, frame in enumerate(sorted(graph.nodes))}
    lines: List[str] = []
    for frame, k in ids.items():
        lines.append(f"# FRAME {k} {frame.agent} {frame.index}")
    for frame, k in ids.items():
        pose = graph.nodes[frame]
        if frame in scales:
            fields = _pose_fields(pose) + [f"{scales[frame]:.17g}"]
            lines.append(" ".join(["VERTEX_SIM3:QUAT", str(k)] + fields))
        else:
            lines.append(" ".join(["VERTEX_SE3:QUAT", str(k)] + _pose_fields(pose)))
    for frame in sorted(graph.fixed):
        lines.append(f"FIX {ids[frame]}")
    for edge in graph.edges:
        info = to_g2o_information(edge.information).upper_triangle()
        lines.append(
            " ".join(
                ["EDGE_SE3:QUAT", str(ids[edge.from_node]), str(ids[edge.to_node])]
                + _pose_fields(edge.measurement)
                + [f"{v:.17g}" for v in info]
            )
        )
    return "\n".join(lines) + "\n"


def write_g2o(
    path: PathLike, graph: PoseGraph, scales: Optional[Mapping[FrameId, float]] = None
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_g2o(graph, scales), encoding="utf-8")
    logger.debug("Wrote %d nodes and %d edges to %s", len(graph.nodes), len(graph.edges), path)
    return path


def parse_g2o(text: str) -> G2oDocument:
    frames: Dict[int, FrameId] = {}
    poses: Dict[int, SE3Transform] = {}
    scales: Dict[int, float] = {}
    fixed: List[int] = []
    raw_edges: List[List[str]] = []

    for lineno, line in enumerate(text.splitlines(), start=1):
        data = line.strip().split()
        if not data:
            continue
        tag = data[0]
        try:
            if tag == "#":
                if len(data) == 5 and data[1] == "FRAME":
                    frames[int(data[2])] = FrameId(data[3], int(data[4]))
            elif tag == "VERTEX_SE3:QUAT":
                poses[int(data[1])] = _pose_from(data[2:9])
            elif tag == "VERTEX_SIM3:QUAT":
                poses[int(data[1])] = _pose_from(data[2:9])
                scales[int(data[1])] = float(data[9])
            elif tag == "FIX":
                fixed.extend(int(v) for v in data[1:])
            elif tag == "EDGE_SE3:QUAT":
                if len(data) != 31:
                    raise ValueError(f"expected 31 fields, got {len(data)}")
                raw_edges.append(data)
            else:
                logger.debug("g2o line %d: ignoring tag %s", lineno, tag)
        except (IndexError, ValueError) as exc:
            raise PoseGraphError(f"g2o line {lineno}: {exc}") from exc

    def frame_of(k: int) -> FrameId:
        return frames.get(k, FrameId(DEFAULT_AGENT, k))

    graph = PoseGraph()
    for k in sorted(poses):
        graph.add_node(frame_of(k), poses[k], fixed=k in fixed)
    for data in raw_edges:
        a, b = frame_of(int(data[1])), frame_of(int(data[2]))
        info = from_g2o_information(
            InformationMatrix.from_upper_triangle([float(v) for v in data[10:31]])
        )
        kind = EdgeKind.Odometry if a.agent == b.agent else EdgeKind.Loop
        graph.add_edge(Edge(a, b, _pose_from(data[3:10]), info, kind))
    return G2oDocument(graph, {frame_of(k): s for k, s in scales.items()})


def read_g2o(path: PathLike) -> G2oDocument:
    return parse_g2o(Path(path).read_text(encoding="utf-8"))
