from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist

from mapfuse.config import Settings, resolve_settings
from mapfuse.geometry import FrameId
from mapfuse.scene import AgentTrack, Keyframe

logger = logging.getLogger("mapfuse.loops")
logger.addHandler(logging.NullHandler())


@dataclass(frozen=True)
class DetectParams:
    min_gamma: int = 8
    ratio_test: float = 0.8
    max_descriptor_distance: float = 0.5
    min_match_fraction: float = 0.6

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None) -> "DetectParams":
        s = resolve_settings(settings)
        return cls(
            min_gamma=s["LOOP_MIN_GAMMA"],
            ratio_test=s["LOOP_RATIO_TEST"],
            max_descriptor_distance=s["LOOP_MAX_DESCRIPTOR_DISTANCE"],
            min_match_fraction=s["LOOP_MIN_MATCH_FRACTION"],
        )


@dataclass(frozen=True, eq=False)
class LoopClosure:
    """Descriptor matches between source keyframe i and target keyframe j.

    ``source_rows``/``target_rows`` index the keyframes' observation arrays; the matched
    positions are copied out in each keyframe's camera frame and units.
    """

    source_frame: FrameId
    target_frame: FrameId
    source_rows: Tuple[int, ...]
    target_rows: Tuple[int, ...]
    source_points: NDArray[np.float64]
    target_points: NDArray[np.float64]
    source_ids: Tuple[int, ...] = ()
    target_ids: Tuple[int, ...] = ()

    @property
    def gamma(self) -> int:
        return len(self.source_rows)

    @property
    def pair(self) -> Tuple[int, int]:
        return self.source_frame.index, self.target_frame.index

    @property
    def correspondences(self) -> List[Tuple[NDArray[np.float64], NDArray[np.float64]]]:
        return list(zip(self.source_points, self.target_points))

    def true_match_fraction(self) -> float:
        """Share of matches whose landmark ids agree (generator oracle)."""
        if not self.gamma:
            return 0.0
        return float(np.mean(np.asarray(self.source_ids) == np.asarray(self.target_ids)))

    def __repr__(self) -> str:
        return f"LoopClosure({self.source_frame} ~ {self.target_frame}, gamma={self.gamma})"


def match_keyframes(
    kf_s: Keyframe, kf_t: Keyframe, params: Optional[DetectParams] = None
) -> LoopClosure:
    """Mutual nearest neighbours over descriptors, filtered by ratio test and distance gate."""
    params = params or DetectParams()
    rows_s: NDArray[np.int64] = np.zeros(0, dtype=np.int64)
    rows_t: NDArray[np.int64] = np.zeros(0, dtype=np.int64)
    if len(kf_s) and len(kf_t):
        d = cdist(kf_s.descriptors, kf_t.descriptors)
        best_t = np.argmin(d, axis=1)
        best_s = np.argmin(d, axis=0)
        rows = np.arange(d.shape[0])
        mutual = best_s[best_t] == rows
        d1 = d[rows, best_t]
        if d.shape[1] > 1:
            d2 = np.partition(d, 1, axis=1)[:, 1]
            ratio_ok = d1 < params.ratio_test * d2
        else:
            ratio_ok = np.ones(d.shape[0], dtype=bool)
        keep = mutual & ratio_ok & (d1 <= params.max_descriptor_distance)
        rows_s, rows_t = rows[keep], best_t[keep]
    return LoopClosure(
        source_frame=kf_s.frame,
        target_frame=kf_t.frame,
        source_rows=tuple(int(r) for r in rows_s),
        target_rows=tuple(int(r) for r in rows_t),
        source_points=kf_s.positions[rows_s],
        target_points=kf_t.positions[rows_t],
        source_ids=tuple(int(i) for i in kf_s.landmark_ids[rows_s]),
        target_ids=tuple(int(i) for i in kf_t.landmark_ids[rows_t]),
    )


def accepts_place(lc: LoopClosure, kf_s: Keyframe, kf_t: Keyframe, params: DetectParams) -> bool:
    """Place-recognition acceptance: enough matches, and enough of the smaller view matched."""
    if lc.gamma < params.min_gamma:
        return False
    return lc.gamma >= params.min_match_fraction * min(len(kf_s), len(kf_t))


def canonical_roles(a: AgentTrack, b: AgentTrack) -> Tuple[AgentTrack, AgentTrack]:
    """(source, target) with the lexicographically smaller agent id as source."""
    return (a, b) if a.agent_id <= b.agent_id else (b, a)


def iter_loop_candidates(
    source: AgentTrack, target: AgentTrack, params: Optional[DetectParams] = None
) -> Iterator[LoopClosure]:
    """Every accepted keyframe pair, by source index then target index."""
    params = params or DetectParams()
    source, target = canonical_roles(source, target)
    for kf_s in source:
        for kf_t in target:
            lc = match_keyframes(kf_s, kf_t, params)
            if accepts_place(lc, kf_s, kf_t, params):
                yield lc


def detect_first_loop(
    source: AgentTrack, target: AgentTrack, params: Optional[DetectParams] = None
) -> Optional[LoopClosure]:
    """Earliest accepted keyframe pair, or None when the agents never see the same place."""
    lc = next(iter_loop_candidates(source, target, params), None)
    if lc is None:
        logger.debug("No loop closure between %s and %s", source.agent_id, target.agent_id)
    else:
        logger.info("First loop closure %r", lc)
    return lc
