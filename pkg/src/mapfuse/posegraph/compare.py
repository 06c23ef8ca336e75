"""Pose-graph baselines and the side-by-side comparison with the direct merge.

All methods share one merge trigger and the scale chosen by the direct merge, so they differ
only in how the relative pose between the agents is obtained:

* ``LoopBox``: initial guess refined by ICP at the anchor pair.
* ``PcrProDirect``: the center match's own scale and initial guess, no refinement.
* ``Pgo*``: per-pair ICP edges with information matrices, optimized over the triple's nodes;
  the relative pose is read off the center pair after optimization.

Timings exclude detection and scale selection, which every method shares.
"""

from __future__ import annotations

import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, Union

from mapfuse.config import Settings, resolve_settings
from mapfuse.evaluation.metrics import merged_positions_error
from mapfuse.exceptions import MapFuseError
from mapfuse.geometry import FrameId, SE3Transform, Sim3Transform, relative
from mapfuse.loops import MergeTrigger, canonical_roles
from mapfuse.registration import (
    MergedMap,
    MergeOutcome,
    PairRegistration,
    Stopwatch,
    align_chain,
    apply_merge,
    final_transform,
    merge_pair,
    register_pair,
)
from mapfuse.scene import AgentTrack, Scenario

from .g2o import write_g2o
from .graph import (
    PairKey,
    PgoConfiguration,
    PoseGraph,
    build_graph,
    odometry_information,
    required_pairs,
)
from .optimizer import OptimizeResult, PgoParams, optimize

logger = logging.getLogger("mapfuse.posegraph")
logger.addHandler(logging.NullHandler())

PathLike = Union[str, Path]
Task = Callable[[], Tuple[MergedMap, float, float, Dict[str, Any]]]


class Method(str, Enum):
    PcrProDirect = "pcr_pro_direct"
    PgoStraight = "pgo_straight"
    PgoFullyConnected = "pgo_fully_connected"
    PgoTopMatches = "pgo_top_matches"
    LoopBox = "loop_box"

    @property
    def pgo_configuration(self) -> Optional[PgoConfiguration]:
        return _PGO_METHODS.get(self)

    @classmethod
    def parse(cls, text: str) -> "Method":
        key = text.strip().lower().replace("-", "_")
        for method in cls:
            if key in (method.value, method.name.lower()):
                return method
        raise ValueError(f"unknown method {text!r}; choose from {[m.value for m in cls]}")


_PGO_METHODS: Dict[Method, PgoConfiguration] = {
    Method.PgoStraight: PgoConfiguration.Straight,
    Method.PgoFullyConnected: PgoConfiguration.FullyConnected,
    Method.PgoTopMatches: PgoConfiguration.TopMatches,
}

ALL_METHODS: Tuple[Method, ...] = tuple(Method)


@dataclass(frozen=True, eq=False)
class PgoOutcome:
    config: PgoConfiguration
    initial: PoseGraph
    result: OptimizeResult
    registrations: Dict[PairKey, PairRegistration]
    relative: SE3Transform
    final: Sim3Transform
    merged: MergedMap
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def wall_time_seconds(self) -> float:
        return sum(self.timings.values())

    def write_g2o(self, path: PathLike, optimized: bool = True) -> Path:
        return write_g2o(path, self.result.graph if optimized else self.initial)


def run_pgo(
    config: PgoConfiguration,
    source: AgentTrack,
    target: AgentTrack,
    trigger: MergeTrigger,
    sigma: float,
    settings: Optional[Settings] = None,
    noise_sigma: float = 0.0,
) -> PgoOutcome:
    """Register every pair ``config`` needs, optimize, and merge at the center pair."""
    s = resolve_settings(settings)
    watch = Stopwatch()
    triple = trigger.triple
    known = {m.pair: m for m in triple.matches}

    registrations = {
        (i, j): register_pair(source, target, i, j, sigma, s, noise_sigma, known.get((i, j)))
        for i, j in required_pairs(config, triple)
    }
    watch.lap("register")

    odometry = odometry_information(
        s["PGO_ODOMETRY_INFO_TRANSLATION"], s["PGO_ODOMETRY_INFO_ROTATION"]
    )
    graph = build_graph(config, triple, registrations, (source, target), sigma, odometry)
    result = optimize(graph, PgoParams.from_settings(s))
    watch.lap("optimize")

    i2, j2 = triple.center.pair
    x_s = result.graph.nodes[FrameId(source.agent_id, i2)]
    x_t = result.graph.nodes[FrameId(target.agent_id, j2)]
    rel = relative(x_s, x_t)
    final = rel.as_sim3()
    merged = apply_merge(source, target, Sim3Transform.pure_scale(sigma), final, (i2, j2))
    watch.lap("merge")

    logger.info(
        "PGO %s: %d edges, cost %.3e -> %.3e in %d iterations",
        config.value,
        len(graph.edges),
        result.initial_cost,
        result.final_cost,
        result.iterations,
    )
    return PgoOutcome(config, graph, result, registrations, rel, final, merged, dict(watch.timings))


@dataclass(frozen=True, eq=False)
class DirectOutcome:
    """Merge from the center match alone: its scale and initial guess, no ICP."""

    sigma: float
    final: Sim3Transform
    merged: MergedMap
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def wall_time_seconds(self) -> float:
        return sum(self.timings.values())


def pcr_pro_direct(
    source: AgentTrack, target: AgentTrack, loop_box: MergeOutcome
) -> DirectOutcome:
    watch = Stopwatch()
    center = loop_box.selection.estimates[1]
    i, j = center.pair
    _, _, chain = align_chain(
        source[i].cloud,
        target[j].cloud,
        source[i].pose_local,
        target[j].pose_local,
        center.sigma_z,
        center.initial_guess,
    )
    final = final_transform(chain)
    watch.lap("align")
    merged = apply_merge(source, target, chain.scaling, final, (i, j))
    watch.lap("merge")
    return DirectOutcome(center.sigma_z, final, merged, dict(watch.timings))


@dataclass(frozen=True)
class MethodRun:
    method: Method
    sigma: Optional[float] = None
    rmse: Optional[float] = None
    relative_rmse: Optional[float] = None
    wall_time_seconds: Optional[float] = None
    scale_error_percent: Optional[float] = None
    error: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method.value,
            "sigma": self.sigma,
            "rmse": self.rmse,
            "relative_rmse": self.relative_rmse,
            "wall_time_seconds": self.wall_time_seconds,
            "scale_error_percent": self.scale_error_percent,
            "error": self.error,
            **({"details": self.details} if self.details else {}),
        }


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    source_id: str
    target_id: str
    expected_sigma: float
    runs: Dict[Method, MethodRun]
    merged: Dict[Method, MergedMap] = field(default_factory=dict)
    loop_box: Optional[MergeOutcome] = None

    def run(self, method: Method) -> MethodRun:
        return self.runs[method]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": self.source_id,
            "target": self.target_id,
            "expected_sigma": self.expected_sigma,
            "scale_time_seconds": self.loop_box.scale_time_seconds if self.loop_box else None,
            "runs": [self.runs[m].to_dict() for m in Method if m in self.runs],
        }


def _scored(
    method: Method,
    scenario: Scenario,
    merged: MergedMap,
    sigma: float,
    expected_sigma: float,
    wall: float,
    details: Optional[Dict[str, Any]] = None,
) -> MethodRun:
    err = merged_positions_error(
        {a: merged.positions(a) for a in merged.agents},
        {a: scenario.true_positions(a) for a in merged.agents},
    )
    return MethodRun(
        method=method,
        sigma=sigma,
        rmse=err.rmse,
        relative_rmse=err.relative,
        wall_time_seconds=wall,
        scale_error_percent=100.0 * abs(sigma - expected_sigma) / expected_sigma,
        details=details or {},
    )


def compare_configurations(
    scenario: Scenario,
    settings: Optional[Settings] = None,
    methods: Optional[Iterable[Method]] = None,
    noise_sigma: Optional[float] = None,
    max_workers: int = 1,
    agents: Optional[Tuple[str, str]] = None,
) -> ComparisonReport:
    """Run the selected methods on one agent pair of ``scenario`` with shared inputs.

    A method that fails is reported with its error and the others still run. If the direct
    merge itself fails, nothing can be compared and every requested method carries that
    error. ``noise_sigma`` defaults to the scenario's observation noise.
    """
    s = resolve_settings(settings)
    wanted = list(dict.fromkeys(methods)) if methods is not None else list(ALL_METHODS)
    ids = agents or (scenario.agent_ids[0], scenario.agent_ids[1])
    source, target = canonical_roles(scenario.agent(ids[0]), scenario.agent(ids[1]))
    expected = scenario.expected_sigma(source.agent_id, target.agent_id)
    if noise_sigma is None:
        noise_sigma = float(getattr(scenario.config, "observation_noise", 0.0))

    try:
        loop_box = merge_pair(source, target, settings=s)
    except MapFuseError as exc:
        logger.warning("Direct merge failed for %s/%s: %s", source.agent_id, target.agent_id, exc)
        failed = {m: MethodRun(m, error=f"{type(exc).__name__}: {exc}") for m in wanted}
        return ComparisonReport(source.agent_id, target.agent_id, expected, failed)

    sigma = loop_box.sigma_star
    tasks: Dict[Method, Task] = {}

    def loop_box_task() -> Tuple[MergedMap, float, float, Dict[str, Any]]:
        return loop_box.merged, sigma, loop_box.merge_time_seconds, {"icp_rms": loop_box.icp.rms}

    def direct_task() -> Tuple[MergedMap, float, float, Dict[str, Any]]:
        direct = pcr_pro_direct(source, target, loop_box)
        return direct.merged, direct.sigma, direct.wall_time_seconds, {}

    def pgo_task(config: PgoConfiguration) -> Task:
        def run() -> Tuple[MergedMap, float, float, Dict[str, Any]]:
            out = run_pgo(config, source, target, loop_box.trigger, sigma, s, noise_sigma)
            info = {
                "edges": len(out.initial.edges),
                "iterations": out.result.iterations,
                "final_cost": out.result.final_cost,
            }
            return out.merged, sigma, out.wall_time_seconds, info

        return run

    for method in wanted:
        config = method.pgo_configuration
        if method is Method.LoopBox:
            tasks[method] = loop_box_task
        elif method is Method.PcrProDirect:
            tasks[method] = direct_task
        elif config is not None:
            tasks[method] = pgo_task(config)

    def execute(method: Method) -> Tuple[MethodRun, Optional[MergedMap]]:
        try:
            merged, sig, wall, details = tasks[method]()
        except MapFuseError as exc:
            logger.warning("%s failed: %s", method.value, exc)
            return MethodRun(method, error=f"{type(exc).__name__}: {exc}"), None
        return _scored(method, scenario, merged, sig, expected, wall, details), merged

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(execute, wanted))
    else:
        results = [execute(m) for m in wanted]

    runs = {m: run for m, (run, _) in zip(wanted, results)}
    merged = {m: mm for m, (_, mm) in zip(wanted, results) if mm is not None}
    return ComparisonReport(source.agent_id, target.agent_id, expected, runs, merged, loop_box)


def summarize(runs: Iterable[MethodRun]) -> Dict[str, Any]:
    """Median RMSE and wall time per method over the runs that succeeded."""
    grouped: Dict[Method, List[MethodRun]] = {}
    for run in runs:
        grouped.setdefault(run.method, []).append(run)
    out: Dict[str, Any] = {}
    for method in Method:
        group = grouped.get(method)
        if not group:
            continue
        ok = [r for r in group if r.ok]
        out[method.value] = {
            "runs": len(group),
            "failures": len(group) - len(ok),
            "median_rmse": statistics.median(r.rmse for r in ok if r.rmse is not None) if ok else None,
            "median_relative_rmse": (
                statistics.median(r.relative_rmse for r in ok if r.relative_rmse is not None)
                if ok
                else None
            ),
            "median_wall_time_seconds": (
                statistics.median(r.wall_time_seconds for r in ok if r.wall_time_seconds is not None)
                if ok
                else None
            ),
        }
    return out
