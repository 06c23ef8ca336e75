from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

from mapfuse.exceptions import MissingEstimateError, PoseGraphError
from mapfuse.geometry import FrameId, SE3Transform, compose, relative, scale_translation
from mapfuse.loops import MatchTriple
from mapfuse.registration import InformationMatrix, PairRegistration
from mapfuse.scene import AgentTrack

logger = logging.getLogger("mapfuse.posegraph")
logger.addHandler(logging.NullHandler())

PairKey = Tuple[int, int]


class PgoConfiguration(str, Enum):
    Straight = "straight"
    FullyConnected = "fully_connected"
    TopMatches = "top_matches"


class EdgeKind(str, Enum):
    Odometry = "odometry"
    Loop = "loop"


@dataclass(frozen=True)
class Edge:
    """Relative pose of ``to_node`` seen from ``from_node``."""

    from_node: FrameId
    to_node: FrameId
    measurement: SE3Transform
    information: InformationMatrix
    kind: EdgeKind = EdgeKind.Loop


@dataclass
class PoseGraph:
    nodes: Dict[FrameId, SE3Transform] = field(default_factory=dict)
    edges: List[Edge] = field(default_factory=list)
    fixed: Set[FrameId] = field(default_factory=set)

    def add_node(self, frame: FrameId, pose: SE3Transform, fixed: bool = False) -> None:
        self.nodes[frame] = pose
        if fixed:
            self.fixed.add(frame)

    def add_edge(self, edge: Edge) -> None:
        for end in (edge.from_node, edge.to_node):
            if end not in self.nodes:
                raise PoseGraphError(f"edge endpoint {end} is not a node")
        self.edges.append(edge)

    def edges_of(self, kind: EdgeKind) -> List[Edge]:
        return [e for e in self.edges if e.kind is kind]

    @property
    def inter_agent_edges(self) -> List[Edge]:
        return [e for e in self.edges if e.from_node.agent != e.to_node.agent]

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        adjacency: Dict[FrameId, Set[FrameId]] = {n: set() for n in self.nodes}
        for e in self.edges:
            adjacency[e.from_node].add(e.to_node)
            adjacency[e.to_node].add(e.from_node)
        start = next(iter(self.nodes))
        seen = {start}
        queue = deque([start])
        while queue:
            for nxt in adjacency[queue.popleft()] - seen:
                seen.add(nxt)
                queue.append(nxt)
        return len(seen) == len(self.nodes)

    def with_nodes(self, nodes: Mapping[FrameId, SE3Transform]) -> "PoseGraph":
        return replace(self, nodes=dict(nodes), edges=list(self.edges), fixed=set(self.fixed))

    def transformed(self, t: SE3Transform) -> "PoseGraph":
        """Every node estimate moved by the same rigid transform."""
        return self.with_nodes({k: compose(t, v) for k, v in self.nodes.items()})


def triple_nodes(triple: MatchTriple) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Source indices S1..S3 and target indices T1..T3 in offset order."""
    return tuple(p[0] for p in triple.pairs), tuple(p[1] for p in triple.pairs)


def required_pairs(config: PgoConfiguration, triple: MatchTriple) -> List[PairKey]:
    s, t = triple_nodes(triple)
    direct = list(zip(s, t))
    if config is PgoConfiguration.TopMatches:
        gammas = triple.gammas
        return [direct[gammas.index(max(gammas))]]
    if config is PgoConfiguration.Straight:
        return direct
    # {T1,S2}, {T2,S1}, {T2,S3}, {T3,S2}
    cross = [(s[1], t[0]), (s[0], t[1]), (s[2], t[1]), (s[1], t[2])]
    return direct + cross


def _odometry_edges(
    track: AgentTrack,
    indices: Iterable[int],
    poses: Mapping[int, SE3Transform],
    info: InformationMatrix,
) -> List[Edge]:
    ordered = sorted(set(indices))
    return [
        Edge(
            FrameId(track.agent_id, a),
            FrameId(track.agent_id, b),
            relative(poses[a], poses[b]),
            info,
            EdgeKind.Odometry,
        )
        for a, b in zip(ordered, ordered[1:])
    ]


def build_graph(
    config: PgoConfiguration,
    triple: MatchTriple,
    registrations: Mapping[PairKey, PairRegistration],
    tracks: Tuple[AgentTrack, AgentTrack],
    sigma: float,
    odometry_info: InformationMatrix,
) -> PoseGraph:
    """Nodes are the triple's keyframes in the sigma-scaled source world; the first source node
    is fixed. Target nodes start from the strongest inter-agent edge plus target odometry."""
    source, target = tracks
    pairs = required_pairs(config, triple)
    missing = [p for p in pairs if p not in registrations]
    if missing:
        raise MissingEstimateError(f"{config.value}: no registration for pairs {missing}")

    s_idx, t_idx = triple_nodes(triple)
    s_poses = {i: scale_translation(source[i].pose_local, sigma) for i in s_idx}
    t_local = {j: target[j].pose_local for j in t_idx}

    graph = PoseGraph()
    first = min(s_idx)
    for i in sorted(s_poses):
        graph.add_node(FrameId(source.agent_id, i), s_poses[i], fixed=(i == first))

    top = max(pairs, key=lambda p: registrations[p].gamma)
    ti, tj = top
    t_anchor = compose(s_poses[ti], registrations[top].measurement)
    for j in sorted(t_local):
        graph.add_node(
            FrameId(target.agent_id, j), compose(t_anchor, relative(t_local[tj], t_local[j]))
        )

    for edge in _odometry_edges(source, s_idx, s_poses, odometry_info):
        graph.add_edge(edge)
    for edge in _odometry_edges(target, t_idx, t_local, odometry_info):
        graph.add_edge(edge)
    for i, j in pairs:
        reg = registrations[(i, j)]
        graph.add_edge(
            Edge(
                FrameId(source.agent_id, i),
                FrameId(target.agent_id, j),
                reg.measurement,
                reg.information,
                EdgeKind.Loop,
            )
        )
    logger.debug(
        "Built %s graph: %d nodes, %d edges (%d inter-agent)",
        config.value,
        len(graph.nodes),
        len(graph.edges),
        len(graph.inter_agent_edges),
    )
    return graph


def odometry_information(translation: float, rotation: float) -> InformationMatrix:
    return InformationMatrix.diagonal(translation, rotation)


def node_of(graph: PoseGraph, agent: str, index: int) -> Optional[SE3Transform]:
    return graph.nodes.get(FrameId(agent, index))
