"""Command-line front end: ``generate``, ``run``, ``compare`` and ``metrics``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from mapfuse.config import ENV_PREFIX, Settings
from mapfuse.exceptions import MapFuseError
from mapfuse.params import resolve_and_get
from mapfuse.scene import (
    Scenario,
    ScenarioConfig,
    ScenarioState,
    generate,
    generate_chain,
    generate_disjoint,
    generated_state,
    load_scenario,
    save_scenario,
    write_ply,
)

logger = logging.getLogger("mapfuse.cli")
logger.addHandler(logging.NullHandler())

LAYOUTS = ("pair", "chain", "disjoint")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _settings(args: argparse.Namespace) -> Settings:
    overrides: Dict[str, Any] = {}
    for item in args.set or ():
        key, sep, text = item.partition("=")
        if not sep:
            raise MapFuseError(f"--set expects KEY=VALUE, got {item!r}")
        name, spec = resolve_and_get(key.strip())
        overrides[name] = spec.parse_text(text)
    if args.out_dir:
        overrides["OUT_DIR"] = args.out_dir
    return Settings.from_env(ENV_PREFIX, overrides=overrides)


def _scenario(args: argparse.Namespace, settings: Settings) -> Scenario:
    if getattr(args, "scenario", None):
        return load_scenario(args.scenario)
    config = ScenarioConfig.from_settings(settings)
    if args.scales:
        config = config.with_scales(*args.scales)
    if args.noise is not None:
        config = config.with_noise(args.noise)
    layout = getattr(args, "layout", "pair")
    if layout == "chain":
        if not args.scales:
            config = config.with_scales(*(config.scales + (1.0,))[:3])
        return generate_chain(config, args.seed)
    if layout == "disjoint":
        return generate_disjoint(config, args.seed)
    return generate(ScenarioState.parse(args.state), config, args.seed)


def _stem(scenario: Scenario) -> str:
    return f"{scenario.layout}-{scenario.state.value}-seed{scenario.rng_seed}"


def _emit(doc: Dict[str, Any], fmt: str, table: Optional[str] = None) -> None:
    if fmt == "table":
        print(table if table is not None else _key_values(doc))
    else:
        print(json.dumps(doc, indent=2, sort_keys=True, default=str))


def _key_values(doc: Dict[str, Any], prefix: str = "") -> str:
    lines: List[str] = []
    for key, value in doc.items():
        if isinstance(value, dict):
            lines.append(_key_values(value, f"{prefix}{key}."))
        else:
            lines.append(f"{prefix}{key}: {value}")
    return "\n".join(line for line in lines if line)


def cmd_generate(args: argparse.Namespace) -> int:
    from mapfuse.registration import world_cloud

    settings = _settings(args)
    scenario = _scenario(args, settings)
    out = Path(settings["OUT_DIR"])
    stem = _stem(scenario)
    path = save_scenario(scenario, out / f"{stem}.json")
    clouds = [
        str(write_ply(out / stem / f"{a.agent_id}.ply", world_cloud(a))) for a in scenario.agents
    ]
    doc = {**generated_state(scenario), "scenario": str(path), "clouds": clouds}
    _emit(doc, args.format)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    from mapfuse.bus import BusMode, run_session
    from mapfuse.evaluation import merged_positions_error

    settings = _settings(args)
    scenario = _scenario(args, settings)
    result = run_session(scenario, BusMode(args.mode), settings)
    merged = result.merged
    err = merged_positions_error(
        {a: merged.positions(a) for a in merged.agents},
        {a: scenario.true_positions(a) for a in merged.agents},
    )
    out = Path(settings["OUT_DIR"]) / f"session-{_stem(scenario)}"
    ply = merged.write_ply(out / "merged.ply")
    tum = merged.write_tum(out / "tum", settings["EVAL_TIMESTAMP_RATE"])
    report = {**result.report(), "rmse": err.rmse, "relative_rmse": err.relative}
    text = json.dumps(report, indent=2, sort_keys=True)
    (out / "session.json").write_text(text, encoding="utf-8")
    transcript = result.transcript.to_jsonl(out / "transcript.jsonl")
    doc = {
        "mode": result.mode.value,
        "notices": len(result.notices),
        "agents": list(merged.agents),
        "rmse": err.rmse,
        "relative_rmse": err.relative,
        "merged_ply": str(ply),
        "trajectories": [str(p) for p in tum],
        "transcript": str(transcript),
    }
    _emit(doc, args.format)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    from mapfuse.evaluation.experiment import ComparisonRow, format_table, run_experiment
    from mapfuse.posegraph import Method, compare_configurations

    settings = _settings(args)
    if args.config:
        result = run_experiment(args.config, settings, args.out_dir)
        results, _ = result.write()
        doc = result.to_dict()
        logger.info("Experiment results in %s", results)
        _emit(doc, args.format, result.table())
        return 0 if all(r.error is None for r in result.rows) else 1

    methods = [Method.parse(m) for m in args.methods] if args.methods else None
    scenario = _scenario(args, settings)
    report = compare_configurations(scenario, settings, methods)
    state = scenario.state
    noise = args.noise if args.noise is not None else 1.0
    scale_time = report.loop_box.scale_time_seconds if report.loop_box else None
    rows = [
        ComparisonRow.from_run(scenario.rng_seed, state, noise, run, scale_time)
        for run in report.runs.values()
    ]
    _emit(report.to_dict(), args.format, format_table(rows))
    return 0 if all(r.ok for r in report.runs.values()) else 1


def cmd_metrics(args: argparse.Namespace) -> int:
    from mapfuse.evaluation import AlignmentMode, associated_poses, metric_rmse, read_tum

    estimated, reference = associated_poses(
        read_tum(args.estimated), read_tum(args.reference), args.max_difference
    )
    metric = metric_rmse(estimated, reference, AlignmentMode.parse(args.alignment))
    doc = {"pairs": len(estimated), **metric.to_dict()}
    _emit(doc, args.format)
    return 0


def _csv(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _scales(text: str) -> List[float]:
    return [float(v) for v in _csv(text)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapfuse", description="Merge monocular multi-agent maps from a single loop closure."
    )
    parser.add_argument("--log-level", default="WARNING", help="Logging level (default: WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--out-dir",
        default=None,
        help=f"Output directory (default: ${ENV_PREFIX}OUT_DIR or mapfuse-out)",
    )
    common.add_argument("--format", choices=("json", "table"), default="json")
    common.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="Override a tunable, e.g. --set icp.trim_fraction=0.9 (repeatable)",
    )

    scene = argparse.ArgumentParser(add_help=False)
    scene.add_argument("--state", choices=[s.value for s in ScenarioState], default="b")
    scene.add_argument("--seed", type=int, default=0)
    scene.add_argument("--noise", type=float, default=None, help="Noise level multiplier")
    scene.add_argument("--scales", type=_scales, default=None, help="Agent map scales, e.g. 1,2")

    p = sub.add_parser("generate", parents=[common, scene], help="Write a synthetic scenario")
    p.add_argument("--layout", choices=LAYOUTS, default="pair")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", parents=[common, scene], help="Replay a scenario through the bus")
    p.add_argument("--scenario", type=Path, default=None, help="Scenario JSON from 'generate'")
    p.add_argument("--layout", choices=LAYOUTS, default="pair")
    p.add_argument("--mode", choices=("centralized", "distributed"), default="centralized")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[common, scene], help="Compare merge methods")
    p.add_argument("--scenario", type=Path, default=None, help="Scenario JSON from 'generate'")
    p.add_argument("--methods", type=_csv, default=None, help="Comma-separated method names")
    p.add_argument("--config", type=Path, default=None, help="Experiment config (JSON)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("metrics", parents=[common], help="Trajectory error between TUM files")
    p.add_argument("estimated", type=Path)
    p.add_argument("reference", type=Path)
    p.add_argument("--alignment", choices=("none", "se3", "sim3"), default="se3")
    p.add_argument("--max-difference", type=float, default=0.02, help="Timestamp tolerance (s)")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format=LOG_FORMAT)
    try:
        return int(args.func(args))
    except MapFuseError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
