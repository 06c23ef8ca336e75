"""Scenario JSON documents (schema v1) and ASCII PLY export."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from plyfile import PlyData, PlyElement

from mapfuse.exceptions import ScenarioError
from mapfuse.geometry import FrameId, PointCloud, SE3Transform, Sim3Transform

from .config import ScenarioConfig
from .types import AgentTrack, CovisibleWindow, Keyframe, Scenario, ScenarioState

logger = logging.getLogger("mapfuse.scene.io")
logger.addHandler(logging.NullHandler())

SCHEMA = "mapfuse.scenario"
SCHEMA_VERSION = 1

PathLike = Union[str, Path]


def _rows(a: NDArray[Any]) -> List[Any]:
    return np.asarray(a).tolist()


def _keyframe_to_dict(kf: Keyframe) -> Dict[str, Any]:
    return {
        "index": kf.index,
        "pose": list(kf.pose_local.to_row_major()),
        "landmark_ids": _rows(kf.landmark_ids),
        "positions": _rows(kf.positions),
        "descriptors": _rows(kf.descriptors),
        "cloud": _rows(kf.cloud.points),
    }


def _keyframe_from_dict(agent: str, d: Dict[str, Any], length: int) -> Keyframe:
    ids = np.asarray(d["landmark_ids"], dtype=np.int64)
    return Keyframe(
        frame=FrameId(agent, int(d["index"])),
        pose_local=SE3Transform.from_matrix(np.asarray(d["pose"], dtype=float).reshape(4, 4)),
        landmark_ids=ids,
        positions=np.asarray(d["positions"], dtype=float).reshape(-1, 3),
        descriptors=np.asarray(d["descriptors"], dtype=float).reshape(ids.size, length),
        cloud=PointCloud(np.asarray(d["cloud"], dtype=float).reshape(-1, 3)),
    )


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    cfg = scenario.config if isinstance(scenario.config, ScenarioConfig) else None
    lengths = {kf.descriptor_length for a in scenario.agents for kf in a if len(kf)}
    return {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "state": scenario.state.value,
        "layout": scenario.layout,
        "seed": scenario.rng_seed,
        "config": cfg.to_dict() if cfg is not None else None,
        "descriptor_length": lengths.pop() if lengths else 0,
        "landmarks": _rows(scenario.landmarks),
        "ground_truth": {
            agent: list(t.to_row_major()) for agent, t in sorted(scenario.ground_truth.items())
        },
        "true_poses": {
            agent: [list(p.to_row_major()) for p in poses]
            for agent, poses in sorted(scenario.true_poses.items())
        },
        "covisibility": [
            {
                "source": w.source,
                "target": w.target,
                "source_indices": list(w.source_indices),
                "target_indices": list(w.target_indices),
            }
            for w in scenario.covisibility
        ],
        "agents": [
            {
                "agent_id": a.agent_id,
                "local_scale": a.local_scale,
                "keyframes": [_keyframe_to_dict(kf) for kf in a],
            }
            for a in scenario.agents
        ],
    }


def scenario_from_dict(doc: Dict[str, Any]) -> Scenario:
    if doc.get("schema") != SCHEMA:
        raise ScenarioError(f"not a scenario document (schema={doc.get('schema')!r})")
    if doc.get("version") != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario schema version {doc.get('version')!r}")
    length = int(doc.get("descriptor_length", 0))
    agents = tuple(
        AgentTrack(
            a["agent_id"],
            tuple(_keyframe_from_dict(a["agent_id"], kf, length) for kf in a["keyframes"]),
            float(a["local_scale"]),
        )
        for a in doc["agents"]
    )
    return Scenario(
        state=ScenarioState(doc["state"]),
        agents=agents,
        landmarks=np.asarray(doc["landmarks"], dtype=float).reshape(-1, 3),
        ground_truth={k: Sim3Transform.from_row_major(v) for k, v in doc["ground_truth"].items()},
        rng_seed=int(doc["seed"]),
        true_poses={
            k: tuple(SE3Transform.from_matrix(np.asarray(p).reshape(4, 4)) for p in v)
            for k, v in doc["true_poses"].items()
        },
        covisibility=tuple(
            CovisibleWindow(
                w["source"], w["target"], tuple(w["source_indices"]), tuple(w["target_indices"])
            )
            for w in doc.get("covisibility", [])
        ),
        layout=doc.get("layout", "pair"),
        config=ScenarioConfig.from_dict(doc["config"]) if doc.get("config") else None,
    )


def save_scenario(scenario: Scenario, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scenario_to_dict(scenario)), encoding="utf-8")
    logger.info("Wrote scenario seed=%d to %s", scenario.rng_seed, path)
    return path


def load_scenario(path: PathLike) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return scenario_from_dict(doc)


def write_ply(
    path: PathLike, cloud: PointCloud, agent_ids: Optional[ArrayLike] = None
) -> Path:
    """ASCII PLY with float x/y/z and, when given, an integer ``agent`` scalar per point."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dtype = [("x", "f8"), ("y", "f8"), ("z", "f8")]
    if agent_ids is not None:
        dtype.append(("agent", "i4"))
    elements = np.empty(len(cloud), dtype=dtype)
    elements["x"], elements["y"], elements["z"] = cloud.points.T
    if agent_ids is not None:
        ids = np.asarray(agent_ids, dtype=np.int32).reshape(-1)
        if ids.size != len(cloud):
            raise ValueError("agent id count does not match the cloud size")
        elements["agent"] = ids
    PlyData([PlyElement.describe(elements, "vertex")], text=True).write(str(path))
    return path


def read_ply(path: PathLike) -> tuple[PointCloud, Optional[NDArray[np.int32]]]:
    vertex = PlyData.read(str(path))["vertex"]
    points = np.stack([np.asarray(vertex[t], dtype=float) for t in ("x", "y", "z")], axis=1)
    names = {p.name for p in vertex.properties}
    agents = np.asarray(vertex["agent"], dtype=np.int32) if "agent" in names else None
    return PointCloud(points), agents
