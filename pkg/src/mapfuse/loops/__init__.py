"""Inter-agent loop closure detection and direction disambiguation."""

from __future__ import annotations

from .direction import (
    OFFSETS,
    DirectionVerdict,
    MatchTriple,
    MergeTrigger,
    PairingMode,
    build_match_triple,
    determine_direction,
    find_merge_trigger,
    loop_report,
)
from .matching import (
    DetectParams,
    LoopClosure,
    accepts_place,
    canonical_roles,
    detect_first_loop,
    iter_loop_candidates,
    match_keyframes,
)

__all__ = [
    "OFFSETS",
    "DetectParams",
    "DirectionVerdict",
    "LoopClosure",
    "MatchTriple",
    "MergeTrigger",
    "PairingMode",
    "accepts_place",
    "build_match_triple",
    "canonical_roles",
    "detect_first_loop",
    "determine_direction",
    "find_merge_trigger",
    "iter_loop_candidates",
    "loop_report",
    "match_keyframes",
]
