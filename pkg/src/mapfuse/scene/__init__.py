"""Synthetic, ground-truth-instrumented multi-agent scenarios."""

from __future__ import annotations

from .config import ScenarioConfig
from .generator import (
    generate,
    generate_chain,
    generate_disjoint,
    generated_state,
    nadir_rotation,
    perturb_odometry,
)
from .io import load_scenario, read_ply, save_scenario, scenario_from_dict, scenario_to_dict, write_ply
from .types import (
    AgentTrack,
    CovisibleWindow,
    Keyframe,
    LandmarkObservation,
    Scenario,
    ScenarioState,
)

__all__ = [
    "AgentTrack",
    "CovisibleWindow",
    "Keyframe",
    "LandmarkObservation",
    "Scenario",
    "ScenarioConfig",
    "ScenarioState",
    "generate",
    "generate_chain",
    "generate_disjoint",
    "generated_state",
    "load_scenario",
    "nadir_rotation",
    "perturb_odometry",
    "read_ply",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "write_ply",
]
