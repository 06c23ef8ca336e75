"""The direct merge: direction, match triple, scale, alignment chain, ICP and map update."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from mapfuse.config import Settings, resolve_settings
from mapfuse.exceptions import InsufficientMatchesError
from mapfuse.geometry import SE3Transform, Sim3Transform
from mapfuse.loops import (
    DetectParams,
    LoopClosure,
    MergeTrigger,
    build_match_triple,
    canonical_roles,
    determine_direction,
    find_merge_trigger,
    loop_report,
    match_keyframes,
)
from mapfuse.scale import (
    ScaleEstimate,
    ScaleParams,
    ScaleSelection,
    estimate_match_scale,
    scale_report,
    select_scale,
)
from mapfuse.scene import AgentTrack
from mapfuse.transcript import Transcript

from .chain import AlignmentChain, align_chain, final_transform
from .icp import IcpParams, IcpResult, icp_correspondences, icp_point_to_point, registration_sane
from .information import (
    InfoParams,
    InformationMatrix,
    icp_information_matrix,
    right_perturbation_information,
)
from .merge import MergedMap, apply_merge, rigid_pose

logger = logging.getLogger("mapfuse.registration")
logger.addHandler(logging.NullHandler())


class Stopwatch:
    def __init__(self) -> None:
        self.timings: Dict[str, float] = {}
        self._last = time.perf_counter()

    def lap(self, stage: str) -> float:
        now = time.perf_counter()
        self.timings[stage] = self.timings.get(stage, 0.0) + (now - self._last)
        self._last = now
        return self.timings[stage]

    @property
    def total(self) -> float:
        return sum(self.timings.values())


@dataclass(frozen=True, eq=False)
class MergeOutcome:
    source_id: str
    target_id: str
    trigger: MergeTrigger
    selection: ScaleSelection
    chain: AlignmentChain
    icp: IcpResult
    final: Sim3Transform
    merged: MergedMap
    sane: bool = True
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def sigma_star(self) -> float:
        return self.selection.sigma_star

    @property
    def sigma_scaling(self) -> Sim3Transform:
        return self.chain.scaling

    @property
    def anchor(self) -> tuple[int, int]:
        return self.selection.anchor

    @property
    def relative(self) -> Sim3Transform:
        """Target world into source world, in source units."""
        return self.merged.relative(self.source_id, self.target_id)

    @property
    def scale_time_seconds(self) -> float:
        return self.timings.get("scale", 0.0)

    @property
    def merge_time_seconds(self) -> float:
        """Alignment, ICP and map update; detection and scale are reported separately."""
        return sum(self.timings.get(k, 0.0) for k in ("align", "icp", "merge"))

    def report(self) -> Dict[str, Any]:
        return {
            "source": self.source_id,
            "target": self.target_id,
            "loop": loop_report(self.trigger.loop, self.trigger.triple, self.trigger.verdict),
            "scale": scale_report(self.selection),
            "icp": {
                "iterations": self.icp.iterations,
                "converged": self.icp.converged,
                "final_cost": self.icp.final_cost,
                "rms": self.icp.rms,
                "correspondences": self.icp.correspondences_used,
                "sane": self.sane,
            },
            "final": list(self.final.to_row_major()),
            "relative": list(self.relative.to_row_major()),
            "timings": dict(self.timings),
        }


def resolve_trigger(
    source: AgentTrack,
    target: AgentTrack,
    lc: Optional[LoopClosure],
    params: DetectParams,
) -> MergeTrigger:
    if lc is None:
        trigger = find_merge_trigger(source, target, params)
        if trigger is None:
            raise InsufficientMatchesError(
                f"no usable loop closure between {source.agent_id} and {target.agent_id}"
            )
        return trigger
    verdict = determine_direction(source, target, lc, params)
    return MergeTrigger(lc, verdict, build_match_triple(source, target, lc, verdict, params))


def merge_pair(
    source: AgentTrack,
    target: AgentTrack,
    lc: Optional[LoopClosure] = None,
    settings: Optional[Settings] = None,
    transcript: Optional[Transcript] = None,
) -> MergeOutcome:
    """Merge ``target`` into ``source`` from a single loop closure.

    Roles are canonical (smaller agent id is the source). Without ``lc`` the first usable
    loop closure is searched for.
    """
    s = resolve_settings(settings)
    source, target = canonical_roles(source, target)
    watch = Stopwatch()

    trigger = resolve_trigger(source, target, lc, DetectParams.from_settings(s))
    watch.lap("detect")
    _note(
        transcript,
        "stage",
        stage="detect",
        report=loop_report(trigger.loop, trigger.triple, trigger.verdict),
    )

    selection = select_scale(trigger.triple, (source, target), ScaleParams.from_settings(s))
    watch.lap("scale")
    _note(transcript, "stage", stage="scale", report=scale_report(selection))

    i, j = selection.anchor
    aligned_s, aligned_t, chain = align_chain(
        source[i].cloud,
        target[j].cloud,
        source[i].pose_local,
        target[j].pose_local,
        selection.sigma_star,
        selection.initial_guess,
    )
    watch.lap("align")

    icp_params = IcpParams.from_settings(s)
    icp = icp_point_to_point(aligned_s, aligned_t, icp_params)
    sane = registration_sane(icp, aligned_s, icp_params.sanity_fraction)
    chain = chain.with_icp(icp.transform)
    final = final_transform(chain)
    watch.lap("icp")
    _note(transcript, "stage", stage="icp", iterations=icp.iterations, rms=icp.rms, sane=sane)

    merged = apply_merge(source, target, chain.scaling, final, (i, j))
    watch.lap("merge")
    _note(transcript, "stage", stage="merge", anchor=[i, j])

    outcome = MergeOutcome(
        source_id=source.agent_id,
        target_id=target.agent_id,
        trigger=trigger,
        selection=selection,
        chain=chain,
        icp=icp,
        final=final,
        merged=merged,
        sane=sane,
        timings=dict(watch.timings),
    )
    logger.info(
        "Merged %s <- %s: sigma*=%.6f branch=%s icp_rms=%.3g",
        outcome.source_id,
        outcome.target_id,
        outcome.sigma_star,
        selection.branch.value,
        icp.rms,
    )
    return outcome


def _note(transcript: Optional[Transcript], kind: str, **fields: Any) -> None:
    if transcript is not None:
        transcript.add(kind, **fields)


@dataclass(frozen=True, eq=False)
class PairRegistration:
    """One inter-agent edge: source keyframe i to target keyframe j, in merged units.

    ``measurement`` is the pose of target camera j in the scaled source camera i;
    ``information`` weights the right-perturbation residual of that measurement.
    """

    source_index: int
    target_index: int
    gamma: int
    estimate: ScaleEstimate
    icp: IcpResult
    final: Sim3Transform
    measurement: SE3Transform
    information: InformationMatrix


def register_pair(
    source: AgentTrack,
    target: AgentTrack,
    i: int,
    j: int,
    sigma: float,
    settings: Optional[Settings] = None,
    noise_sigma: float = 0.0,
    match: Optional[LoopClosure] = None,
) -> PairRegistration:
    """Initial guess, ICP and information matrix for one keyframe pair at a shared scale."""
    s = resolve_settings(settings)
    detect = DetectParams.from_settings(s)
    match = match if match is not None else match_keyframes(source[i], target[j], detect)
    if match.gamma < detect.min_gamma:
        raise InsufficientMatchesError(f"pair ({i}, {j}) has only {match.gamma} matches")
    estimate = estimate_match_scale(match, source[i], target[j], params=ScaleParams.from_settings(s))
    aligned_s, aligned_t, chain = align_chain(
        source[i].cloud,
        target[j].cloud,
        source[i].pose_local,
        target[j].pose_local,
        sigma,
        estimate.initial_guess,
    )
    icp_params = IcpParams.from_settings(s)
    icp = icp_point_to_point(aligned_s, aligned_t, icp_params)
    final = final_transform(chain.with_icp(icp.transform))
    measurement = rigid_pose(final)

    pairs = icp_correspondences(icp, aligned_s, aligned_t, icp_params)
    left = icp_information_matrix(
        pairs.moving, pairs.fixed, icp.transform, noise_sigma, InfoParams.from_settings(s)
    )
    return PairRegistration(
        source_index=i,
        target_index=j,
        gamma=match.gamma,
        estimate=estimate,
        icp=icp,
        final=final,
        measurement=measurement,
        information=right_perturbation_information(left, measurement),
    )

