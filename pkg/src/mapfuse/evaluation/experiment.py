"""Seeded method-comparison batches driven by a JSON config document.

A config looks like::

    {
      "name": "table",
      "states": ["b", "d"],
      "seeds": 50,
      "noise": [1.0],
      "scales": [1.0, 2.0],
      "methods": ["loop_box", "pgo_fully_connected"],
      "export": ["ply", "tum"],
      "settings": {"icp.trim_fraction": 0.9}
    }

``seeds`` is either a count (seeds 0..n-1) or an explicit list.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from mapfuse.config import Settings, resolve_settings
from mapfuse.exceptions import ExperimentConfigError, SettingsValidationError
from mapfuse.params import ParamSpec
from mapfuse.posegraph import ALL_METHODS, Method, MethodRun, compare_configurations, summarize
from mapfuse.scene import ScenarioConfig, ScenarioState, generate
from mapfuse.utils import _checksum_of_results

logger = logging.getLogger("mapfuse.evaluation")
logger.addHandler(logging.NullHandler())

PathLike = Union[str, Path]

EXPORT_KINDS = ("ply", "tum")
STATE_KEYS = frozenset({s.value for s in ScenarioState} | {s.name for s in ScenarioState})


def _states_ok(value: Sequence[Any]) -> bool:
    return all(isinstance(v, str) and v in STATE_KEYS for v in value)


def _methods_ok(value: Sequence[Any]) -> bool:
    for v in value:
        Method.parse(v)
    return True


def _seeds_ok(value: Any) -> bool:
    if isinstance(value, int):
        return value >= 1
    return len(value) > 0 and all(
        isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in value
    )


def _non_negative(value: Sequence[Any]) -> bool:
    return all(isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0 for v in value)


def _positive(value: Sequence[Any]) -> bool:
    return all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in value)


SCHEMA: Dict[str, ParamSpec] = {
    spec.name: spec
    for spec in (
        ParamSpec("name", "experiment", str, bounds=(1, 200)),
        ParamSpec("states", ["b"], list, validator=_states_ok, bounds=(1, 4)),
        ParamSpec("seeds", 10, (int, list), validator=_seeds_ok),
        ParamSpec("noise", [1.0], list, validator=_non_negative, bounds=(1, 1000)),
        ParamSpec("scales", None, list, validator=_positive, bounds=(2, 2), allow_none=True),
        ParamSpec(
            "methods",
            [m.value for m in ALL_METHODS],
            list,
            validator=_methods_ok,
            bounds=(1, len(Method)),
            description="Methods to compare; an empty list is rejected",
        ),
        ParamSpec("workers", None, int, bounds=(1, 1024), allow_none=True),
        ParamSpec("out_dir", None, str, bounds=(1, 4096), allow_none=True),
        ParamSpec(
            "export",
            [],
            list,
            validator=lambda v: all(k in EXPORT_KINDS for k in v),
        ),
        ParamSpec("settings", {}, dict),
    )
}


def _line_of(text: str, key: str) -> Optional[int]:
    match = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    states: Tuple[ScenarioState, ...]
    seeds: Tuple[int, ...]
    noise: Tuple[float, ...]
    methods: Tuple[Method, ...]
    scales: Optional[Tuple[float, float]] = None
    workers: Optional[int] = None
    out_dir: Optional[str] = None
    export: Tuple[str, ...] = ()
    settings: Dict[str, Any] = field(default_factory=dict)

    def build_settings(self, base: Optional[Settings] = None) -> Settings:
        values = resolve_settings(base).as_plain_dict()
        values.update(self.settings)
        return Settings(values)

    def scenario_config(self, settings: Settings, noise: float) -> ScenarioConfig:
        cfg = ScenarioConfig.from_settings(settings)
        if self.scales is not None:
            cfg = cfg.with_scales(*self.scales)
        return cfg.with_noise(noise)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "states": [s.value for s in self.states],
            "seeds": list(self.seeds),
            "noise": list(self.noise),
            "scales": list(self.scales) if self.scales is not None else None,
            "methods": [m.value for m in self.methods],
            "export": list(self.export),
            "settings": dict(self.settings),
        }


def parse_experiment(text: str) -> ExperimentConfig:
    """Validate a JSON config document; errors carry the line of the offending key."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ExperimentConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ExperimentConfigError("experiment config must be a JSON object", line=1)

    unknown = sorted(set(doc) - set(SCHEMA))
    if unknown:
        key = unknown[0]
        raise ExperimentConfigError(f"unknown key {key!r}", line=_line_of(text, key), key=key)

    values: Dict[str, Any] = {}
    for name, spec in SCHEMA.items():
        value = doc.get(name, spec.default)
        try:
            spec.validate(value)
        except SettingsValidationError as exc:
            logger.error("Experiment config rejected at %r: %s", name, exc.errors)
            raise ExperimentConfigError(
                f"{name}: {exc.errors.get(name, exc)}", line=_line_of(text, name), key=name
            ) from exc
        values[name] = value

    overrides = values["settings"]
    try:
        Settings(overrides)
    except SettingsValidationError as exc:
        key = next(iter(exc.errors))
        line = _line_of(text, key) or _line_of(text, "settings")
        raise ExperimentConfigError(
            f"settings: {exc.errors[key]}", line=line, key=key
        ) from exc

    seeds = values["seeds"]
    return ExperimentConfig(
        name=values["name"],
        states=tuple(ScenarioState.parse(s) for s in values["states"]),
        seeds=tuple(range(seeds)) if isinstance(seeds, int) else tuple(seeds),
        noise=tuple(float(n) for n in values["noise"]),
        methods=tuple(dict.fromkeys(Method.parse(m) for m in values["methods"])),
        scales=_pair(values["scales"]),
        workers=values["workers"],
        out_dir=values["out_dir"],
        export=tuple(dict.fromkeys(values["export"])),
        settings=dict(overrides),
    )


def _pair(values: Optional[Sequence[Any]]) -> Optional[Tuple[float, float]]:
    if not values:
        return None
    return float(values[0]), float(values[1])


def load_experiment(path: PathLike) -> ExperimentConfig:
    return parse_experiment(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class ComparisonRow:
    """One method on one seeded scenario."""

    seed: int
    state: ScenarioState
    noise: float
    method: Method
    sigma: Optional[float] = None
    rmse: Optional[float] = None
    relative_rmse: Optional[float] = None
    wall_time_seconds: Optional[float] = None
    scale_error_percent: Optional[float] = None
    scale_time_seconds: Optional[float] = None
    error: Optional[str] = None

    @classmethod
    def from_run(
        cls,
        seed: int,
        state: ScenarioState,
        noise: float,
        run: MethodRun,
        scale_time: Optional[float],
    ) -> "ComparisonRow":
        return cls(
            seed=seed,
            state=state,
            noise=noise,
            method=run.method,
            sigma=run.sigma,
            rmse=run.rmse,
            relative_rmse=run.relative_rmse,
            wall_time_seconds=run.wall_time_seconds,
            scale_error_percent=run.scale_error_percent,
            scale_time_seconds=scale_time,
            error=run.error,
        )

    @property
    def sort_key(self) -> Tuple[str, float, int, int]:
        return (self.state.value, self.noise, self.seed, list(Method).index(self.method))

    def as_run(self) -> MethodRun:
        return MethodRun(
            self.method,
            sigma=self.sigma,
            rmse=self.rmse,
            relative_rmse=self.relative_rmse,
            wall_time_seconds=self.wall_time_seconds,
            scale_error_percent=self.scale_error_percent,
            error=self.error,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "state": self.state.value,
            "noise": self.noise,
            "method": self.method.value,
            "sigma": self.sigma,
            "rmse": self.rmse,
            "relative_rmse": self.relative_rmse,
            "wall_time_seconds": self.wall_time_seconds,
            "scale_error_percent": self.scale_error_percent,
            "scale_time_seconds": self.scale_time_seconds,
            "error": self.error,
        }


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    rows: Tuple[ComparisonRow, ...]
    artifacts: Tuple[str, ...] = ()
    directory: Optional[Path] = None

    def summary(self) -> Dict[str, Any]:
        """Medians per state and noise level, then per method."""
        groups: Dict[str, List[MethodRun]] = {}
        for row in self.rows:
            groups.setdefault(f"{row.state.value}@{row.noise:g}", []).append(row.as_run())
        return {key: summarize(runs) for key, runs in sorted(groups.items())}

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "config": self.config.to_dict(),
            "rows": [r.to_dict() for r in self.rows],
            "summary": self.summary(),
            "artifacts": list(self.artifacts),
        }
        doc["checksum"] = _checksum_of_results(doc)
        return doc

    @property
    def checksum(self) -> str:
        return str(self.to_dict()["checksum"])

    def table(self) -> str:
        return format_table(self.rows)

    def write(self, out_dir: Optional[PathLike] = None) -> Tuple[Path, Path]:
        """Results JSON and text table; artifact paths are relative to the experiment directory."""
        target = out_dir if out_dir is not None else self.directory
        if target is None:
            raise ValueError("no output directory given")
        out = Path(target)
        out.mkdir(parents=True, exist_ok=True)
        results = out / "results.json"
        results.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        table = out / "table.txt"
        table.write_text(self.table() + "\n", encoding="utf-8")
        logger.info("Wrote %s and %s", results, table)
        return results, table


COLUMNS = (
    ("state", "state"),
    ("noise", "noise"),
    ("seed", "seed"),
    ("method", "method"),
    ("sigma", "sigma"),
    ("scale_error_percent", "scale err %"),
    ("scale_time_seconds", "scale time (s)"),
    ("wall_time_seconds", "time (s)"),
    ("rmse", "rmse"),
    ("relative_rmse", "rmse / extent"),
    ("error", "error"),
)


def _cell(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def format_table(rows: Sequence[ComparisonRow]) -> str:
    """Aligned plain-text table, one line per row."""
    header = [title for _, title in COLUMNS]
    body = [[_cell(row.to_dict()[key]) for key, _ in COLUMNS] for row in rows]
    widths = [max(len(line[k]) for line in [header, *body]) for k in range(len(header))]
    lines = [
        "  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip()
        for line in [header, *body]
    ]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _export(
    out_dir: Path,
    state: ScenarioState,
    noise: float,
    seed: int,
    merged: Mapping[Method, Any],
    kinds: Sequence[str],
    rate_hz: float,
) -> List[str]:
    written: List[Path] = []
    base = out_dir / f"{state.value}" / f"noise-{noise:g}" / f"seed-{seed:04d}"
    for method, merged_map in merged.items():
        if "ply" in kinds:
            written.append(merged_map.write_ply(base / f"{method.value}.ply"))
        if "tum" in kinds:
            written.extend(merged_map.write_tum(base / method.value, rate_hz))
    return [p.relative_to(out_dir).as_posix() for p in written]


def run_experiment(
    config: Union[ExperimentConfig, PathLike],
    settings: Optional[Settings] = None,
    out_dir: Optional[PathLike] = None,
) -> ExperimentResult:
    """Compare the configured methods over every (state, noise, seed) combination.

    Scenarios run concurrently; rows come back sorted by state, noise, seed and method so
    the results document does not depend on scheduling.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_experiment(config)
    s = cfg.build_settings(settings)
    target = Path(out_dir or cfg.out_dir or s["OUT_DIR"]) / cfg.name
    workers = cfg.workers or s["EVAL_WORKERS"]
    rate = s["EVAL_TIMESTAMP_RATE"]

    cases = [
        (state, noise, seed) for state in cfg.states for noise in cfg.noise for seed in cfg.seeds
    ]
    logger.info(
        "Experiment %r: %d scenarios x %d methods on %d workers",
        cfg.name,
        len(cases),
        len(cfg.methods),
        workers,
    )

    def one(case: Tuple[ScenarioState, float, int]) -> Tuple[List[ComparisonRow], List[str]]:
        state, noise, seed = case
        scenario = generate(state, cfg.scenario_config(s, noise), seed)
        report = compare_configurations(scenario, s, cfg.methods)
        scale_time = report.loop_box.scale_time_seconds if report.loop_box else None
        rows = [
            ComparisonRow.from_run(seed, state, noise, report.run(m), scale_time)
            for m in cfg.methods
        ]
        files: List[str] = []
        if cfg.export:
            files = _export(target, state, noise, seed, report.merged, cfg.export, rate)
        return rows, files

    with s.locked("experiment"):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, cases))

    rows = sorted((r for batch, _ in outcomes for r in batch), key=lambda r: r.sort_key)
    artifacts = tuple(sorted(p for _, files in outcomes for p in files))
    failures = sum(1 for r in rows if r.error)
    if failures:
        logger.warning("%d of %d method runs failed", failures, len(rows))
    return ExperimentResult(cfg, tuple(rows), artifacts, target)
