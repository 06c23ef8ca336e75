"""Synthetic multi-agent scenarios with ground truth.

Cameras look straight down from a fixed height over a field of landmarks; the camera x axis
follows the direction of travel. Two agents share a straight window, laterally offset, and
turn away from it on opposite sides before and after. Each agent's world is its first
keyframe's camera frame, in that agent's monocular units. Landmarks both agents would see
from outside their shared window are left out of the field.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from mapfuse.exceptions import ScenarioError
from mapfuse.geometry import (
    FrameId,
    PointCloud,
    Rotation,
    SE3Transform,
    Sim3Transform,
    compose,
    inverse,
)

from .config import ScenarioConfig
from .types import AgentTrack, CovisibleWindow, Keyframe, Scenario, ScenarioState

logger = logging.getLogger("mapfuse.scene")
logger.addHandler(logging.NullHandler())

NEIGHBOR_SPREAD = 0.02
FIELD_MARGIN = 0.2
DISJOINT_SHIFT = 50.0
CHAIN_LEGS = 4
CHAIN_GAP = 6


Window = Tuple[str, str, Sequence[int], Sequence[int]]


@dataclass(frozen=True)
class _Plan:
    agent_id: str
    ground: NDArray[np.float64]  # (n, 2) camera ground positions in traversal order


@dataclass(frozen=True)
class _Field:
    landmarks: NDArray[np.float64]
    descriptors: NDArray[np.float64]
    surface: NDArray[np.float64]
    landmark_tree: cKDTree
    surface_tree: cKDTree


def _leg_directions(direction: int, side: int, angle: float) -> Tuple[NDArray[np.float64], ...]:
    c, s = np.cos(angle), np.sin(angle)
    d_in = np.array([direction * c, -side * s])
    d_out = np.array([direction * c, side * s])
    return d_in, d_out


def _window_path(
    window_x: Sequence[float],
    offset: float,
    direction: int,
    side: int,
    pre: int,
    post: int,
    cfg: ScenarioConfig,
) -> NDArray[np.float64]:
    xs = list(window_x) if direction > 0 else list(reversed(list(window_x)))
    window = np.array([[x, offset] for x in xs])
    d_in, d_out = _leg_directions(direction, side, np.deg2rad(cfg.turn_angle_deg))
    before = [window[0] - m * cfg.step * d_in for m in range(pre, 0, -1)]
    after = [window[-1] + m * cfg.step * d_out for m in range(1, post + 1)]
    return np.vstack([*before, window, *after]) if (before or after) else window


def _headings(ground: NDArray[np.float64]) -> NDArray[np.float64]:
    d = np.diff(ground, axis=0)
    d = np.vstack([d, d[-1:]]) if len(d) else np.array([[1.0, 0.0]])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def nadir_rotation(heading: NDArray[np.float64]) -> Rotation:
    """Camera-to-world rotation of a downward camera whose x axis points along ``heading``."""
    c, s = float(heading[0]), float(heading[1])
    return Rotation(np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, -1.0]]))


def _ids_near(tree: cKDTree, centers: NDArray[np.float64], radius: float) -> NDArray[np.int64]:
    hits = tree.query_ball_point(centers, radius)
    if not len(hits):
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate([np.asarray(h, dtype=np.int64) for h in hits]))


def _outside_window_overlap(
    xy: NDArray[np.float64],
    plans: Sequence[_Plan],
    covisible: Sequence[Window],
    radius: float,
) -> NDArray[np.bool_]:
    """Mask of landmarks one agent sees outside its shared windows that another agent also sees.

    Dropping them leaves a landmark-free gap at the window edges, so keyframes outside a
    window share no landmark ids with the other agent.
    """
    drop = np.zeros(len(xy), dtype=bool)
    if not len(xy):
        return drop
    inside: Dict[Tuple[str, str], Set[int]] = {}
    for s, t, s_idx, t_idx in covisible:
        inside.setdefault((s, t), set()).update(s_idx)
        inside.setdefault((t, s), set()).update(t_idx)
    tree = cKDTree(xy)
    for p in plans:
        for q in plans:
            if p.agent_id == q.agent_id:
                continue
            shared = inside.get((p.agent_id, q.agent_id), set())
            outside = [k for k in range(len(p.ground)) if k not in shared]
            if not outside:
                continue
            seen_outside = _ids_near(tree, p.ground[outside], radius)
            seen_by_other = _ids_near(tree, q.ground, radius)
            drop[np.intersect1d(seen_outside, seen_by_other)] = True
    return drop


def _sample_field(
    plans: Sequence[_Plan],
    covisible: Sequence[Window],
    cfg: ScenarioConfig,
    rng: np.random.Generator,
) -> _Field:
    margin = max(cfg.view_radius, cfg.cloud_radius) + FIELD_MARGIN
    boxes: List[Tuple[NDArray[np.float64], NDArray[np.float64]]] = [
        (p.ground.min(axis=0) - margin, p.ground.max(axis=0) + margin) for p in plans
    ]
    merged = True
    while merged:
        merged = False
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                (alo, ahi), (blo, bhi) = boxes[i], boxes[j]
                if np.all(alo <= bhi) and np.all(blo <= ahi):
                    boxes[i] = (np.minimum(alo, blo), np.maximum(ahi, bhi))
                    del boxes[j]
                    merged = True
                    break
            if merged:
                break

    landmarks, ground = [], []
    for lo, hi in boxes:
        area = float(np.prod(hi - lo))
        n_lm = int(round(cfg.landmark_density * area))
        n_gr = int(round(cfg.ground_density * area))
        xy = rng.uniform(lo, hi, size=(n_lm, 2))
        z = rng.uniform(0.0, cfg.landmark_max_height, size=(n_lm, 1))
        landmarks.append(np.hstack([xy, z]))
        gxy = rng.uniform(lo, hi, size=(n_gr, 2))
        ground.append(np.hstack([gxy, np.zeros((n_gr, 1))]))
    lm = np.vstack(landmarks)
    gap = _outside_window_overlap(lm[:, :2], plans, covisible, cfg.view_radius)
    if gap.any():
        logger.debug("Cleared %d landmarks at covisible window edges", int(gap.sum()))
        lm = lm[~gap]
    desc = rng.normal(size=(lm.shape[0], cfg.descriptor_length))
    desc /= np.linalg.norm(desc, axis=1, keepdims=True)
    neighbors = lm + rng.normal(scale=NEIGHBOR_SPREAD, size=lm.shape)
    surface = np.vstack([lm, neighbors, *ground])
    return _Field(
        landmarks=lm,
        descriptors=desc,
        surface=surface,
        landmark_tree=cKDTree(lm[:, :2]),
        surface_tree=cKDTree(surface[:, :2]),
    )


def _observe(
    plan: _Plan,
    scale: float,
    field: _Field,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
) -> Tuple[List[Keyframe], List[SE3Transform]]:
    headings = _headings(plan.ground)
    truth: List[SE3Transform] = []
    for g, h in zip(plan.ground, headings):
        truth.append(SE3Transform(nadir_rotation(h), np.array([g[0], g[1], cfg.camera_height])))
    origin = truth[0]
    origin_inv = inverse(origin)

    keyframes: List[Keyframe] = []
    for index, pose in enumerate(truth):
        rt = pose.rotation.matrix.T
        center = pose.translation
        ids = np.array(
            sorted(field.landmark_tree.query_ball_point(center[:2], cfg.view_radius)),
            dtype=np.int64,
        )
        if cfg.dropout > 0 and ids.size:
            ids = ids[rng.random(ids.size) >= cfg.dropout]
        cam = (field.landmarks[ids] - center) @ rt.T
        if cfg.observation_noise > 0:
            cam = cam + rng.normal(scale=cfg.observation_noise, size=cam.shape)
        desc = field.descriptors[ids]
        if cfg.descriptor_noise > 0:
            desc = desc + rng.normal(scale=cfg.descriptor_noise, size=desc.shape)

        sid = np.array(
            sorted(field.surface_tree.query_ball_point(center[:2], cfg.cloud_radius)),
            dtype=np.int64,
        )
        cloud = (field.surface[sid] - center) @ rt.T
        if cfg.observation_noise > 0:
            cloud = cloud + rng.normal(scale=cfg.observation_noise, size=cloud.shape)

        local = compose(origin_inv, pose)
        keyframes.append(
            Keyframe(
                frame=FrameId(plan.agent_id, index),
                pose_local=SE3Transform(local.rotation, local.translation / scale),
                landmark_ids=ids,
                positions=cam / scale,
                descriptors=desc,
                cloud=PointCloud(cloud / scale),
            )
        )
    return keyframes, truth


def perturb_odometry(
    track: AgentTrack, sigma_t: float, sigma_r: float, seed: int
) -> AgentTrack:
    """Accumulate Gaussian noise along the track's relative pose chain.

    ``sigma_t`` is in the track's own length units per step, ``sigma_r`` in radians per step.
    The first pose is kept, so the trajectory still starts at the origin.
    """
    if sigma_t < 0 or sigma_r < 0:
        raise ScenarioError("odometry noise must be >= 0")
    if sigma_t == 0 and sigma_r == 0:
        return track
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0D0]))
    poses = track.poses
    out = [poses[0]]
    for prev, cur in zip(poses[:-1], poses[1:]):
        step = compose(inverse(prev), cur)
        noise = SE3Transform.from_rotvec(
            rng.normal(scale=sigma_r, size=3), rng.normal(scale=sigma_t, size=3)
        )
        out.append(compose(out[-1], compose(step, noise)))
    return track.with_poses(out)


def _assemble(
    state: ScenarioState,
    layout: str,
    plans: Sequence[_Plan],
    covisible: Sequence[Window],
    cfg: ScenarioConfig,
    seed: int,
) -> Scenario:
    if len(cfg.scales) < len(plans):
        raise ScenarioError(f"{len(plans)} agents need {len(plans)} scales, got {cfg.scales}")
    field = _sample_field(
        plans, covisible, cfg, np.random.default_rng(np.random.SeedSequence([seed, 1]))
    )

    agents, ground_truth, true_poses = [], {}, {}
    for k, (plan, scale) in enumerate(zip(plans, cfg.scales)):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2, k]))
        keyframes, truth = _observe(plan, scale, field, cfg, rng)
        track = AgentTrack(plan.agent_id, tuple(keyframes), scale)
        track = perturb_odometry(
            track, cfg.odometry_sigma_t * cfg.step / scale, cfg.odometry_sigma_r, seed * 31 + k
        )
        agents.append(track)
        ground_truth[plan.agent_id] = Sim3Transform(scale, truth[0].rotation, truth[0].translation)
        true_poses[plan.agent_id] = tuple(truth)

    windows = []
    by_id = {a.agent_id: a for a in agents}
    for source, target, s_idx, t_idx in covisible:
        for i, j in zip(s_idx, t_idx):
            shared = np.intersect1d(by_id[source][i].landmark_ids, by_id[target][j].landmark_ids)
            if shared.size == 0:
                raise ScenarioError(
                    f"no landmarks in the covisible region at {source}:{i} / {target}:{j}"
                )
        windows.append(CovisibleWindow(source, target, tuple(s_idx), tuple(t_idx)))

    scenario = Scenario(
        state=state,
        agents=tuple(agents),
        landmarks=field.landmarks,
        ground_truth=ground_truth,
        rng_seed=int(seed),
        true_poses=true_poses,
        covisibility=tuple(windows),
        layout=layout,
        config=cfg,
    )
    logger.debug(
        "Generated %s scenario state=%s seed=%d agents=%s landmarks=%d",
        layout,
        state.name,
        seed,
        scenario.agent_ids,
        field.landmarks.shape[0],
    )
    return scenario


def generate(
    state: ScenarioState, config: Optional[ScenarioConfig] = None, seed: int = 0
) -> Scenario:
    """Two agents, ``a`` and ``b``, sharing one covisible window in the given state."""
    cfg = config if config is not None else ScenarioConfig()
    window, pre, post = cfg.window_plan(state.many_loop_closures)
    if window < 3:
        raise ScenarioError(f"overlap window must span at least 3 keyframes, got {window}")
    xs = [k * cfg.step for k in range(window)]
    half = cfg.lateral_offset / 2.0
    direction_b = -1 if state.opposite else 1
    plans = [
        _Plan("a", _window_path(xs, half, 1, 1, pre, post, cfg)),
        _Plan("b", _window_path(xs, -half, direction_b, -1, pre, post, cfg)),
    ]
    source_idx = [pre + k for k in range(window)]
    target_idx = [pre + (window - 1 - k) if state.opposite else pre + k for k in range(window)]
    return _assemble(state, "pair", plans, [("a", "b", source_idx, target_idx)], cfg, seed)


def generate_chain(config: Optional[ScenarioConfig] = None, seed: int = 0) -> Scenario:
    """Three agents: ``b`` drives straight and shares one window with ``a``, a later one with
    ``c``; ``a`` and ``c`` never see the same landmarks."""
    cfg = config if config is not None else ScenarioConfig(scales=(1.0, 1.0, 1.0))
    window = cfg.single_window
    if window < 3:
        raise ScenarioError(f"overlap window must span at least 3 keyframes, got {window}")
    legs = min(CHAIN_LEGS, cfg.single_pre, cfg.single_post)
    p1 = legs
    p2 = p1 + window + CHAIN_GAP
    n_b = p2 + window + legs
    b_ground = np.array([[k * cfg.step, 0.0] for k in range(n_b)])
    xs_a = [k * cfg.step for k in range(p1, p1 + window)]
    xs_c = [k * cfg.step for k in range(p2, p2 + window)]
    plans = [
        _Plan("a", _window_path(xs_a, cfg.lateral_offset, 1, 1, legs, legs, cfg)),
        _Plan("b", b_ground),
        _Plan("c", _window_path(xs_c, -cfg.lateral_offset, 1, -1, legs, legs, cfg)),
    ]
    covisible = [
        ("a", "b", [legs + k for k in range(window)], [p1 + k for k in range(window)]),
        ("b", "c", [p2 + k for k in range(window)], [legs + k for k in range(window)]),
    ]
    return _assemble(ScenarioState.SameDirSingleLC, "chain", plans, covisible, cfg, seed)


def generate_disjoint(config: Optional[ScenarioConfig] = None, seed: int = 0) -> Scenario:
    """Two agents driving in separate, non-overlapping landmark fields."""
    cfg = config if config is not None else ScenarioConfig()
    window, pre, post = cfg.window_plan(False)
    xs = [k * cfg.step for k in range(window)]
    a = _window_path(xs, 0.0, 1, 1, pre, post, cfg)
    b = _window_path(xs, 0.0, 1, -1, pre, post, cfg) + np.array([0.0, DISJOINT_SHIFT])
    plans = [_Plan("a", a), _Plan("b", b)]
    return _assemble(ScenarioState.SameDirSingleLC, "disjoint", plans, [], cfg, seed)


def generated_state(scenario: Scenario) -> Dict[str, object]:
    """Compact description used in reports."""
    return {
        "state": scenario.state.name,
        "layout": scenario.layout,
        "seed": scenario.rng_seed,
        "agents": {a.agent_id: {"keyframes": len(a), "scale": a.local_scale} for a in scenario.agents},
    }
