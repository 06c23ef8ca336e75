"""Levenberg-Marquardt over SE(3) node poses with right-multiplicative increments.

Edge residual: ``e = [t, rotvec(R)]`` of ``Z^-1 * X_from^-1 * X_to``; cost ``sum e^T W e``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from mapfuse.config import Settings, resolve_settings
from mapfuse.exceptions import GaugeUnfixedError, NotConnectedError
from mapfuse.geometry import FrameId, SE3Transform, compose, compose_all, inverse

from .graph import Edge, PoseGraph

logger = logging.getLogger("mapfuse.posegraph")
logger.addHandler(logging.NullHandler())

JACOBIAN_STEP = 1e-7
MAX_LAMBDA = 1e12


@dataclass(frozen=True)
class PgoParams:
    max_iterations: int = 100
    relative_tolerance: float = 1e-9
    absolute_cost: float = 1e-20
    initial_lambda: float = 1e-4
    robust: bool = False
    huber_factor: float = 3.0

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None) -> "PgoParams":
        s = resolve_settings(settings)
        return cls(
            max_iterations=s["PGO_MAX_ITERATIONS"],
            relative_tolerance=s["PGO_RELATIVE_TOLERANCE"],
            absolute_cost=s["PGO_ABSOLUTE_COST"],
            initial_lambda=s["PGO_INITIAL_LAMBDA"],
            robust=s["PGO_ROBUST"],
            huber_factor=s["PGO_HUBER_FACTOR"],
        )


@dataclass(frozen=True)
class OptimizeResult:
    graph: PoseGraph
    trace: Tuple[float, ...]
    iterations: int
    converged: bool
    stalled: bool = False

    @property
    def initial_cost(self) -> float:
        return self.trace[0]

    @property
    def final_cost(self) -> float:
        return self.trace[-1]


def retract(pose: SE3Transform, delta: NDArray[np.float64]) -> SE3Transform:
    """``pose * (Exp(delta[3:]), delta[:3])``."""
    return compose(pose, SE3Transform.from_rotvec(delta[3:], delta[:3]))


def edge_residual(edge: Edge, x_from: SE3Transform, x_to: SE3Transform) -> NDArray[np.float64]:
    err = compose_all([inverse(edge.measurement), inverse(x_from), x_to])
    return np.concatenate([err.translation, err.rotation.as_rotvec()])


def _huber_weight(r: float, width: float) -> float:
    return 1.0 if r <= width else width / r


def _huber_cost(r: float, width: float) -> float:
    return r * r if r <= width else 2.0 * width * r - width * width


class _Problem:
    def __init__(self, graph: PoseGraph, params: PgoParams) -> None:
        self.graph = graph
        self.params = params
        self.free: List[FrameId] = sorted(n for n in graph.nodes if n not in graph.fixed)
        self.slot: Dict[FrameId, int] = {n: k for k, n in enumerate(self.free)}
        self.width: Optional[float] = None
        if params.robust and graph.edges:
            r = [self.mahalanobis(e, graph.nodes) for e in graph.edges]
            median = float(np.median(r))
            self.width = params.huber_factor * median if median > 0 else None

    def mahalanobis(self, edge: Edge, nodes: Dict[FrameId, SE3Transform]) -> float:
        e = edge_residual(edge, nodes[edge.from_node], nodes[edge.to_node])
        return float(np.sqrt(max(e @ edge.information.matrix @ e, 0.0)))

    def cost(self, nodes: Dict[FrameId, SE3Transform]) -> float:
        total = 0.0
        for edge in self.graph.edges:
            r = self.mahalanobis(edge, nodes)
            total += _huber_cost(r, self.width) if self.width else r * r
        return total

    def _jacobian(
        self, edge: Edge, nodes: Dict[FrameId, SE3Transform], node: FrameId
    ) -> NDArray[np.float64]:
        jac = np.zeros((6, 6))
        for k in range(6):
            step = np.zeros(6)
            step[k] = JACOBIAN_STEP
            plus, minus = dict(nodes), dict(nodes)
            plus[node] = retract(nodes[node], step)
            minus[node] = retract(nodes[node], -step)
            jac[:, k] = (
                edge_residual(edge, plus[edge.from_node], plus[edge.to_node])
                - edge_residual(edge, minus[edge.from_node], minus[edge.to_node])
            ) / (2.0 * JACOBIAN_STEP)
        return jac

    def normal_equations(
        self, nodes: Dict[FrameId, SE3Transform]
    ) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        dim = 6 * len(self.free)
        h = np.zeros((dim, dim))
        b = np.zeros(dim)
        for edge in self.graph.edges:
            e = edge_residual(edge, nodes[edge.from_node], nodes[edge.to_node])
            omega = edge.information.matrix
            if self.width:
                omega = omega * _huber_weight(self.mahalanobis(edge, nodes), self.width)
            blocks = {
                n: self._jacobian(edge, nodes, n)
                for n in (edge.from_node, edge.to_node)
                if n in self.slot
            }
            for a, ja in blocks.items():
                sa = 6 * self.slot[a]
                b[sa : sa + 6] += ja.T @ omega @ e
                for c, jc in blocks.items():
                    sc = 6 * self.slot[c]
                    h[sa : sa + 6, sc : sc + 6] += ja.T @ omega @ jc
        return h, b

    def step(
        self, nodes: Dict[FrameId, SE3Transform], delta: NDArray[np.float64]
    ) -> Dict[FrameId, SE3Transform]:
        out = dict(nodes)
        for n, k in self.slot.items():
            out[n] = retract(nodes[n], delta[6 * k : 6 * k + 6])
        return out


def optimize(graph: PoseGraph, params: Optional[PgoParams] = None) -> OptimizeResult:
    params = params or PgoParams()
    if not graph.fixed:
        raise GaugeUnfixedError("no node is held fixed")
    if not graph.is_connected():
        raise NotConnectedError(f"pose graph with {len(graph.nodes)} nodes is not connected")

    problem = _Problem(graph, params)
    nodes = dict(graph.nodes)
    cost = problem.cost(nodes)
    trace = [cost]
    lam = params.initial_lambda
    converged = cost <= params.absolute_cost or not problem.free
    stalled = False
    iterations = 0

    while not converged and iterations < params.max_iterations:
        iterations += 1
        h, b = problem.normal_equations(nodes)
        damped = h + lam * np.diag(np.maximum(np.diag(h), 1e-12))
        try:
            delta = np.linalg.solve(damped, -b)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        candidate = problem.step(nodes, delta)
        new_cost = problem.cost(candidate)
        if new_cost < cost:
            change = (cost - new_cost) / cost
            nodes, cost = candidate, new_cost
            trace.append(cost)
            lam = max(lam / 10.0, 1e-12)
            if cost <= params.absolute_cost or change < params.relative_tolerance:
                converged = True
        else:
            lam *= 10.0
            if lam > MAX_LAMBDA:
                stalled = True
                break

    if stalled:
        logger.info("LM stalled at cost %.3e: damping exceeded %.0e", cost, MAX_LAMBDA)
    elif not converged:
        logger.info("LM reached the iteration cap (%d) at cost %.3e", params.max_iterations, cost)
    logger.debug("LM: cost %.3e -> %.3e in %d iterations", trace[0], cost, iterations)
    return OptimizeResult(graph.with_nodes(nodes), tuple(trace), iterations, converged, stalled)
