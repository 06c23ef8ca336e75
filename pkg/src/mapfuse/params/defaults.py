"""Built-in tunables for every pipeline stage.

Canonical names are UPPER_SNAKE; each parameter also answers to a dotted lowercase alias
(``icp.trim_fraction`` for ``ICP_TRIM_FRACTION``).
"""

from __future__ import annotations

from typing import Any, Tuple

FAILURE_MODES = ("ignore", "log", "raise")


def _positive_scales(value: Tuple[Any, ...]) -> bool:
    return all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in value)


def register_defaults() -> None:
    from mapfuse.params import register_param

    def number(name: str, default: float, lo: float, hi: float, alias: str, text: str) -> None:
        register_param(
            name,
            default=default,
            value_type=(int, float),
            bounds=(lo, hi),
            description=text,
            aliases=(alias,),
            override=True,
        )

    def integer(name: str, default: int, lo: int, hi: int, alias: str, text: str) -> None:
        register_param(
            name,
            default=default,
            value_type=int,
            bounds=(lo, hi),
            description=text,
            aliases=(alias,),
            override=True,
        )

    def flag(name: str, default: bool, alias: str, text: str) -> None:
        register_param(
            name, default=default, value_type=bool, description=text, aliases=(alias,), override=True
        )

    # scene synthesis
    number("SCENE_STEP", 0.5, 1e-3, 10.0, "scene.step", "Keyframe spacing in world units")
    number("SCENE_CAMERA_HEIGHT", 2.0, 0.5, 100.0, "scene.camera_height", "Camera height above ground")
    number("SCENE_LATERAL_OFFSET", 0.1, 0.0, 1.0, "scene.lateral_offset", "Gap between paths in a shared window")
    number("SCENE_TURN_ANGLE_DEG", 60.0, 1.0, 90.0, "scene.turn_angle_deg", "Approach/exit angle of legs outside the window")
    number("SCENE_VIEW_RADIUS", 0.45, 0.05, 10.0, "scene.view_radius", "Horizontal radius of landmark visibility")
    number("SCENE_CLOUD_RADIUS", 0.8, 0.05, 10.0, "scene.cloud_radius", "Horizontal radius of the local point cloud")
    number("SCENE_LANDMARK_DENSITY", 150.0, 1.0, 1e5, "scene.landmark_density", "Landmarks per unit area")
    number("SCENE_LANDMARK_MAX_HEIGHT", 0.6, 0.0, 10.0, "scene.landmark_max_height", "Landmark heights are uniform in [0, max]")
    number("SCENE_GROUND_DENSITY", 40.0, 0.0, 1e5, "scene.ground_density", "Ground surface points per unit area")
    integer("SCENE_DESCRIPTOR_LENGTH", 32, 4, 4096, "scene.descriptor_length", "Descriptor vector length")
    number("SCENE_DESCRIPTOR_NOISE", 0.02, 0.0, 1.0, "scene.descriptor_noise", "Per-component descriptor noise")
    number("SCENE_OBSERVATION_NOISE", 0.003, 0.0, 1.0, "scene.observation_noise", "Landmark and cloud position noise (world units)")
    number("SCENE_ODOMETRY_SIGMA_T", 0.005, 0.0, 1.0, "scene.odometry_sigma_t", "Odometry translation noise as a fraction of the step")
    number("SCENE_ODOMETRY_SIGMA_R", 0.0005, 0.0, 0.5, "scene.odometry_sigma_r", "Odometry rotation noise per step (radians)")
    number("SCENE_DROPOUT", 0.0, 0.0, 0.9, "scene.dropout", "Probability an observation is occluded")
    integer("SCENE_SINGLE_WINDOW", 5, 3, 1000, "scene.single_window", "Covisible keyframes in single-LC states")
    integer("SCENE_SINGLE_PRE", 8, 1, 1000, "scene.single_pre", "Keyframes before the window in single-LC states")
    integer("SCENE_SINGLE_POST", 11, 1, 1000, "scene.single_post", "Keyframes after the window in single-LC states")
    integer("SCENE_MANY_WINDOW", 14, 3, 1000, "scene.many_window", "Covisible keyframes in many-LC states")
    integer("SCENE_MANY_PRE", 4, 1, 1000, "scene.many_pre", "Keyframes before the window in many-LC states")
    integer("SCENE_MANY_POST", 6, 1, 1000, "scene.many_post", "Keyframes after the window in many-LC states")
    register_param(
        "SCENE_SCALES",
        default=(1.0, 1.0),
        value_type=tuple,
        min_length=2,
        validator=_positive_scales,
        description="Per-agent monocular scale, in agent order",
        aliases=("scene.scales",),
        override=True,
    )

    # loop detection
    integer("LOOP_MIN_GAMMA", 8, 8, 1_000_000, "loop.min_gamma", "Minimum matched landmarks per keyframe pair")
    number("LOOP_RATIO_TEST", 0.8, 0.01, 1.0, "loop.ratio_test", "Nearest/second-nearest descriptor distance ratio")
    number("LOOP_MAX_DESCRIPTOR_DISTANCE", 0.5, 0.0, 1e6, "loop.max_descriptor_distance", "Absolute descriptor distance gate")
    number("LOOP_MIN_MATCH_FRACTION", 0.6, 0.0, 1.0, "loop.min_match_fraction", "Place acceptance: matches over the smaller observation count")

    # scale estimation
    number("SCALE_PROCESS_VAR", 0.0, 0.0, 1e6, "scale.process_var", "Kalman process variance")
    number("SCALE_MEASUREMENT_VAR", 0.05**2, 1e-12, 1e6, "scale.measurement_var", "Kalman measurement variance")
    number("SCALE_INITIAL_DELTA", 5.0, 1e-9, 1e6, "scale.initial_delta", "Initial scale-gap bound")
    number("SCALE_VOLUME_RATIO_THRESHOLD", 0.5, 0.0, 1.0, "scale.volume_ratio_threshold", "Volume ratio at or below which the center match is used")
    number("SCALE_CONDITION_LIMIT", 1e8, 1.0, 1e20, "scale.condition_limit", "Eight-point design matrix condition limit")
    number("SCALE_MIN_NORM_FRACTION", 0.25, 0.0, 1.0, "scale.min_norm_fraction", "Skip depth ratios of vectors shorter than this fraction of the median")
    flag("SCALE_ZERO_BASELINE_FALLBACK", True, "scale.zero_baseline_fallback", "Recover rotation from 3-D matches when the baseline vanishes")

    # registration
    integer("ICP_MAX_ITERATIONS", 100, 1, 100_000, "icp.max_iterations", "ICP iteration cap")
    number("ICP_RELATIVE_TOLERANCE", 1e-8, 0.0, 1.0, "icp.relative_tolerance", "Relative cost change at convergence")
    number("ICP_ABSOLUTE_COST", 1e-16, 0.0, 1.0, "icp.absolute_cost", "Cost at or below which ICP stops")
    number("ICP_TRIM_FRACTION", 0.9, 0.1, 1.0, "icp.trim_fraction", "Fraction of best residuals kept")
    number("ICP_GATE_FACTOR", 3.0, 1.0, 1e6, "icp.gate_factor", "Distance gate as a multiple of the initial median residual")
    integer("ICP_MIN_POINTS", 50, 3, 10_000_000, "icp.min_points", "Minimum points per cloud")
    flag("ICP_RECIPROCAL", False, "icp.reciprocal", "Keep only mutually nearest pairs")
    number("ICP_SANITY_FRACTION", 0.1, 0.0, 10.0, "icp.sanity_fraction", "Post-ICP RMS limit as a fraction of the source diameter")
    number("INFO_NOISE_FLOOR", 1e-3, 1e-12, 1.0, "info.noise_floor", "Lower bound on the per-point noise of the correspondence covariance")
    number("INFO_CONDITION_LIMIT", 1e10, 1.0, 1e20, "info.condition_limit", "Hessian condition limit")

    # pose graph
    integer("PGO_MAX_ITERATIONS", 100, 1, 100_000, "pgo.max_iterations", "Levenberg-Marquardt iteration cap")
    number("PGO_RELATIVE_TOLERANCE", 1e-9, 0.0, 1.0, "pgo.relative_tolerance", "Relative cost change at convergence")
    number("PGO_ABSOLUTE_COST", 1e-20, 0.0, 1.0, "pgo.absolute_cost", "Cost at or below which optimization stops")
    number("PGO_INITIAL_LAMBDA", 1e-4, 1e-12, 1e12, "pgo.initial_lambda", "Initial damping")
    flag("PGO_ROBUST", False, "pgo.robust", "Huber kernel on edge residuals")
    number("PGO_HUBER_FACTOR", 3.0, 1e-6, 1e6, "pgo.huber_factor", "Huber width as a multiple of the median residual")
    number("PGO_ODOMETRY_INFO_TRANSLATION", 1e4, 1e-9, 1e15, "pgo.odometry_info_translation", "Odometry edge translation information")
    number("PGO_ODOMETRY_INFO_ROTATION", 1e5, 1e-9, 1e15, "pgo.odometry_info_rotation", "Odometry edge rotation information")

    # agent bus
    integer("BUS_BUFFER_SIZE", 32, 3, 10_000_000, "bus.buffer_size", "Keyframes kept per agent by a pair monitor")
    number("BUS_SUMMARY_VOXEL", 0.05, 1e-6, 1e6, "bus.summary_voxel", "Voxel size of evicted cloud summaries")
    number("BUS_RATE_HZ", 0.0, 0.0, 1e6, "bus.rate_hz", "Replay rate; 0 replays as fast as possible")
    register_param(
        "BUS_NOTICE_FAILURE_MODE",
        default="log",
        value_type=str,
        validator=lambda v: v in FAILURE_MODES,
        description="What a failing notice subscriber does: ignore, log or raise",
        aliases=("bus.notice_failure_mode",),
        override=True,
    )
    integer("BUS_TRANSCRIPT_MAX", 100_000, 1, 100_000_000, "bus.transcript_max", "Transcript records kept per session")

    # evaluation
    number("EVAL_TIMESTAMP_RATE", 10.0, 1e-6, 1e6, "eval.timestamp_rate", "Synthetic keyframe rate for TUM timestamps")
    integer("EVAL_WORKERS", 4, 1, 1024, "eval.workers", "Concurrent seeds in an experiment")
    register_param(
        "OUT_DIR",
        default="mapfuse-out",
        value_type=str,
        min_length=1,
        description="Default output directory for exported artifacts",
        aliases=("eval.out_dir",),
        override=True,
    )
