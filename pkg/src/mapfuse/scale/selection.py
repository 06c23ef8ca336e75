"""Selection of the optimal scale difference from three adjacent matches.

Below the volume-ratio threshold the clouds overlap too little to compare matches, so the
triggering (center) match decides. Above it, pairs of matches are visited in canonical order
and a pair replaces the current choice when it has strictly more support (the smaller of its
two match counts) and a strictly smaller scale gap, while the gap bound is still non-zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from mapfuse.exceptions import InsufficientMatchesError, NoAcceptablePairError
from mapfuse.geometry import Sim3Transform
from mapfuse.loops import MatchTriple
from mapfuse.scene import AgentTrack

from .estimate import ScaleEstimate, ScaleParams, estimate_match_scale, pair_volume_ratio

logger = logging.getLogger("mapfuse.scale")
logger.addHandler(logging.NullHandler())

AgentTrackPair = Tuple[AgentTrack, AgentTrack]

PAIR_ORDER: Tuple[Tuple[int, int], ...] = ((-1, 0), (-1, 1), (0, 1))


class SelectionBranch(str, Enum):
    LowOverlap = "low_overlap"
    Pair = "pair"
    Fallback = "fallback"


@dataclass(frozen=True)
class ScaleSearchState:
    delta_star: float
    gamma_star: int
    sigma_star: Optional[float] = None
    pair: Optional[Tuple[int, int]] = None


@dataclass(frozen=True)
class ScaleSelection:
    sigma_star: float
    chosen: ScaleEstimate
    branch: SelectionBranch
    r_vol: float
    state: ScaleSearchState
    estimates: Tuple[ScaleEstimate, ...] = field(default=())

    @property
    def initial_guess(self) -> Sim3Transform:
        return self.chosen.initial_guess

    @property
    def anchor(self) -> Tuple[int, int]:
        """Keyframe pair whose initial guess was chosen."""
        return self.chosen.pair


def _by_offset(estimates: Sequence[ScaleEstimate]) -> Dict[int, ScaleEstimate]:
    by_z = {e.z_offset: e for e in estimates}
    if len(estimates) != 3 or set(by_z) != {-1, 0, 1}:
        raise ValueError(
            f"optimal_scale needs estimates at offsets -1, 0, 1, got {[e.z_offset for e in estimates]}"
        )
    return by_z


def _stronger(x: ScaleEstimate, y: ScaleEstimate) -> ScaleEstimate:
    """Member with more matches; ties go to the smaller |z|, then the smaller z."""
    return min((x, y), key=lambda e: (-e.gamma_z, abs(e.z_offset), e.z_offset))


def search_pairs(
    estimates: Sequence[ScaleEstimate], initial_delta: float = 5.0
) -> ScaleSearchState:
    """Fold over the canonical pairs; ``pair`` is None when nothing was accepted."""
    by_z = _by_offset(estimates)
    state = ScaleSearchState(delta_star=initial_delta, gamma_star=0)
    for x, y in PAIR_ORDER:
        ex, ey = by_z[x], by_z[y]
        delta = abs(ex.sigma_z - ey.sigma_z)
        gamma = min(ex.gamma_z, ey.gamma_z)
        sigma = (ex.sigma_z + ey.sigma_z) / 2.0
        accept = state.gamma_star < gamma and state.delta_star > delta and state.delta_star != 0
        tie = (
            state.pair is not None
            and 0 not in state.pair
            and 0 in (x, y)
            and delta == state.delta_star
            and gamma == state.gamma_star
        )
        if accept or tie:
            state = ScaleSearchState(delta, gamma, sigma, (x, y))
    return state


def optimal_scale(
    estimates: Sequence[ScaleEstimate],
    r_vol: float,
    initial_delta: float = 5.0,
    volume_ratio_threshold: float = 0.5,
) -> ScaleSelection:
    by_z = _by_offset(estimates)
    ordered = tuple(by_z[z] for z in (-1, 0, 1))
    if r_vol <= volume_ratio_threshold:
        center = by_z[0]
        return ScaleSelection(
            sigma_star=center.sigma_z,
            chosen=center,
            branch=SelectionBranch.LowOverlap,
            r_vol=r_vol,
            state=ScaleSearchState(initial_delta, 0, center.sigma_z, (0, 0)),
            estimates=ordered,
        )
    state = search_pairs(ordered, initial_delta)
    if state.pair is None or state.sigma_star is None:
        raise NoAcceptablePairError(
            f"no pair of scales within {initial_delta}: {[round(e.sigma_z, 6) for e in ordered]}"
        )
    x, y = state.pair
    return ScaleSelection(
        sigma_star=state.sigma_star,
        chosen=_stronger(by_z[x], by_z[y]),
        branch=SelectionBranch.Pair,
        r_vol=r_vol,
        state=state,
        estimates=ordered,
    )


def estimate_triple(
    triple: MatchTriple, tracks: AgentTrackPair, params: Optional[ScaleParams] = None
) -> List[ScaleEstimate]:
    source, target = tracks
    out = []
    for z, match in zip((-1, 0, 1), triple.matches):
        i, j = match.pair
        out.append(
            estimate_match_scale(match, source[i], target[j], params=params, z_offset=z)
        )
    return out


def select_scale(
    triple: MatchTriple, tracks: AgentTrackPair, params: Optional[ScaleParams] = None
) -> ScaleSelection:
    """Estimates at the three offsets, the volume ratio at the center pair, and the choice.

    When the high-overlap search accepts no pair, the center match is used.
    """
    params = params or ScaleParams()
    estimates = estimate_triple(triple, tracks, params)
    source, target = tracks
    i, j = triple.center.pair
    if not len(source[i].cloud) or not len(target[j].cloud):
        raise InsufficientMatchesError("center keyframes carry no cloud for the volume ratio")
    r_vol = pair_volume_ratio(source[i], target[j], estimates[1].sigma_z)
    try:
        return optimal_scale(
            estimates, r_vol, params.initial_delta, params.volume_ratio_threshold
        )
    except NoAcceptablePairError as exc:
        logger.warning("%s; falling back to the center match", exc)
        center = estimates[1]
        return ScaleSelection(
            sigma_star=center.sigma_z,
            chosen=center,
            branch=SelectionBranch.Fallback,
            r_vol=r_vol,
            state=ScaleSearchState(params.initial_delta, 0, center.sigma_z, (0, 0)),
            estimates=tuple(estimates),
        )


def scale_report(selection: ScaleSelection) -> Dict[str, Any]:
    return {
        "estimates": [
            {
                "z": e.z_offset,
                "source": e.source_index,
                "target": e.target_index,
                "sigma": e.sigma_z,
                "gamma": e.gamma_z,
                "zero_baseline": e.zero_baseline,
            }
            for e in selection.estimates
        ],
        "r_vol": selection.r_vol,
        "branch": selection.branch.value,
        "sigma_star": selection.sigma_star,
        "delta_star": selection.state.delta_star,
        "gamma_star": selection.state.gamma_star,
        "anchor": list(selection.anchor),
    }
