from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from mapfuse.exceptions import BoundaryError, InsufficientMatchesError
from mapfuse.scene import AgentTrack

from .matching import DetectParams, LoopClosure, canonical_roles, iter_loop_candidates, match_keyframes

logger = logging.getLogger("mapfuse.loops")
logger.addHandler(logging.NullHandler())

OFFSETS = (-1, 0, 1)


class DirectionVerdict(str, Enum):
    Same = "same"
    Opposite = "opposite"


class PairingMode(str, Enum):
    Direct = "direct"
    Crossed = "crossed"

    @classmethod
    def for_verdict(cls, verdict: DirectionVerdict) -> "PairingMode":
        return cls.Direct if verdict is DirectionVerdict.Same else cls.Crossed

    def target_index(self, j: int, z: int) -> int:
        return j + z if self is PairingMode.Direct else j - z


@dataclass(frozen=True)
class MatchTriple:
    """Loop closures at offsets -1, 0, 1 around the triggering pair (the center)."""

    matches: Tuple[LoopClosure, LoopClosure, LoopClosure]
    pairing_mode: PairingMode

    def __post_init__(self) -> None:
        if len(self.matches) != 3:
            raise ValueError("a match triple holds exactly three loop closures")

    @property
    def center(self) -> LoopClosure:
        return self.matches[1]

    def at(self, z: int) -> LoopClosure:
        return self.matches[OFFSETS.index(z)]

    @property
    def pairs(self) -> Tuple[Tuple[int, int], ...]:
        return tuple(m.pair for m in self.matches)

    @property
    def gammas(self) -> Tuple[int, int, int]:
        low, center, high = self.matches
        return low.gamma, center.gamma, high.gamma


def _oriented(
    source: AgentTrack, target: AgentTrack, lc: LoopClosure
) -> Tuple[AgentTrack, AgentTrack]:
    if lc.source_frame.agent == target.agent_id and lc.target_frame.agent == source.agent_id:
        return target, source
    return source, target


def _require(track: AgentTrack, index: int) -> None:
    if not track.has(index):
        raise BoundaryError(f"agent {track.agent_id} has no keyframe {index} next to the loop closure")


def _gamma(source: AgentTrack, target: AgentTrack, i: int, j: int, params: DetectParams) -> int:
    return match_keyframes(source[i], target[j], params).gamma


def determine_direction(
    source: AgentTrack,
    target: AgentTrack,
    lc: LoopClosure,
    params: Optional[DetectParams] = None,
) -> DirectionVerdict:
    """Same when the direct neighbours match at least as well as the crossed ones."""
    params = params or DetectParams()
    source, target = _oriented(source, target, lc)
    i, j = lc.pair
    for track, index in ((source, i - 1), (source, i + 1), (target, j - 1), (target, j + 1)):
        _require(track, index)
    direct = _gamma(source, target, i + 1, j + 1, params) + _gamma(source, target, i - 1, j - 1, params)
    crossed = _gamma(source, target, i + 1, j - 1, params) + _gamma(source, target, i - 1, j + 1, params)
    verdict = DirectionVerdict.Same if direct >= crossed else DirectionVerdict.Opposite
    logger.debug("Direction at %s: direct=%d crossed=%d -> %s", lc.pair, direct, crossed, verdict.name)
    return verdict


def build_match_triple(
    source: AgentTrack,
    target: AgentTrack,
    lc: LoopClosure,
    verdict: DirectionVerdict,
    params: Optional[DetectParams] = None,
) -> MatchTriple:
    params = params or DetectParams()
    source, target = _oriented(source, target, lc)
    mode = PairingMode.for_verdict(verdict)
    i, j = lc.pair
    matches = []
    for z in OFFSETS:
        si, tj = i + z, mode.target_index(j, z)
        _require(source, si)
        _require(target, tj)
        m = lc if z == 0 else match_keyframes(source[si], target[tj], params)
        if m.gamma < params.min_gamma:
            raise InsufficientMatchesError(
                f"pair ({si}, {tj}) has {m.gamma} matches, need {params.min_gamma}"
            )
        matches.append(m)
    return MatchTriple((matches[0], matches[1], matches[2]), mode)


@dataclass(frozen=True)
class MergeTrigger:
    loop: LoopClosure
    verdict: DirectionVerdict
    triple: MatchTriple
    skipped: int = 0


def find_merge_trigger(
    source: AgentTrack, target: AgentTrack, params: Optional[DetectParams] = None
) -> Optional[MergeTrigger]:
    """First loop closure whose neighbourhood yields a full match triple.

    Candidates at a window edge have no matching neighbours; they are skipped.
    """
    params = params or DetectParams()
    source, target = canonical_roles(source, target)
    skipped = 0
    for lc in iter_loop_candidates(source, target, params):
        try:
            verdict = determine_direction(source, target, lc, params)
            triple = build_match_triple(source, target, lc, verdict, params)
        except (BoundaryError, InsufficientMatchesError) as exc:
            logger.debug("Skipping loop candidate %s (%s): %s", lc.pair, type(exc).__name__, exc)
            skipped += 1
            continue
        return MergeTrigger(lc, verdict, triple, skipped)
    return None


def loop_report(
    lc: LoopClosure,
    triple: Optional[MatchTriple] = None,
    verdict: Optional[DirectionVerdict] = None,
) -> Dict[str, Any]:
    report: Dict[str, Any] = {
        "source_frame": str(lc.source_frame),
        "target_frame": str(lc.target_frame),
        "gamma": lc.gamma,
    }
    if verdict is not None:
        report["verdict"] = verdict.value
    if triple is not None:
        report["pairing_mode"] = triple.pairing_mode.value
        report["pairs"] = [
            {"z": z, "source": m.pair[0], "target": m.pair[1], "gamma": m.gamma}
            for z, m in zip(OFFSETS, triple.matches)
        ]
    return report
