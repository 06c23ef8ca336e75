"""
mapfuse: merge the maps of monocular SLAM agents from a single loop closure.

- Resolves the unknown relative scale of two monocular maps from three keyframe pairs.
- Aligns and refines the maps with a Sim(3) chain and point-to-point ICP.
- Compares the direct merge with pose-graph baselines on synthetic, seeded scenarios.
- Replays agent streams over a master/slave bus that issues one merge per agent pair.
"""

from __future__ import annotations

from mapfuse.config import Settings
from mapfuse.exceptions import (
    EstimationError,
    MapFuseError,
    PoseGraphError,
    ScenarioError,
    SessionError,
    SettingsError,
    SettingsValidationError,
)
from mapfuse.params import get_all_specs, get_param_spec, list_params, register_param
from mapfuse.registration import MergeOutcome, MergedMap, merge_pair
from mapfuse.scene import Scenario, ScenarioConfig, ScenarioState, generate

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "EstimationError",
    "MapFuseError",
    "MergeOutcome",
    "MergedMap",
    "PoseGraphError",
    "Scenario",
    "ScenarioConfig",
    "ScenarioError",
    "ScenarioState",
    "SessionError",
    "Settings",
    "SettingsError",
    "SettingsValidationError",
    "generate",
    "get_all_specs",
    "get_param_spec",
    "list_params",
    "merge_pair",
    "register_param",
]
