"""Pipeline configuration, the per-region stages and the run manifest.

Every stage reads only what earlier stages wrote into the run directory, so
stages can be rerun one at a time. Layout::

    <run>/config.json
    <run>/manifest.json
    <run>/<region>/sessions.json, ingest_report.json
    <run>/<region>/profiles.json
    <run>/<region>/features/<method>.json|.csv, intervals_analysis.json
    <run>/<region>/consensus/ami_table.csv, moves.jsonl, final.json|.csv, state.json
    <run>/<region>/report/report.md|.json|.csv
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import platform
import re
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .algorithms import Partition
from .consensus import ami_table, run_consensus
from .features import (
    METHODS,
    CredShareConfig,
    FeatureConfig,
    HeuristicConfig,
    IntervalAnalysis,
    IntervalConfig,
    OpticsConfig,
    SpectralConfig,
    load_common_credentials,
    read_partition,
    run_features,
    write_partition,
)
from .ingest import ingest_files, sessions_from_dict, sessions_to_dict, split_by_region
from .profile import CapabilityMap, HumanFlagConfig, build_profiles, profiles_from_dict, profiles_to_dict
from .report import ReportConfig, feature_agreement, to_csv, to_json, to_markdown

logger = logging.getLogger(__name__)

STAGES = ("ingest", "profile", "features", "consensus", "report")


class ConfigError(ValueError):
    """Bad or inconsistent configuration (exit code 2)."""


class StageError(RuntimeError):
    def __init__(self, stage: str, region: str, cause: BaseException):
        super().__init__(f"stage {stage} failed for region {region!r}: {cause}")
        self.stage = stage
        self.region = region
        self.cause = cause

    def __reduce__(self):  # keep it picklable across worker processes
        return (StageError, (self.stage, self.region, self.cause))


DEFAULTS: dict = {
    "seed": 0,
    "output_dir": "run",
    "workers": None,
    "strictness": "lenient",
    "regions": {},
    "capability_map": None,
    "human": asdict(HumanFlagConfig()),
    "heuristic": asdict(HeuristicConfig()),
    "intervals": asdict(IntervalConfig()),
    "credshare": {
        "common_credentials_file": None,
        "common_rule": "list",
        "frequency_threshold": 0.01,
        "active_ttl": 3600,
    },
    "optics": asdict(OpticsConfig()),
    "spectral": {"k_min": 2, "k_max": 10},
    "consensus": {"max_sweeps": 50},
    "report": {"max_jaccard_distance": 0.3, "max_session_distance": 0.2, "min_outbound_share": 0.5},
}


def _merge(base: dict, over: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "regions":
            if not isinstance(val, Mapping):
                raise ConfigError(f"{where} must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def apply_overrides(raw: dict, overrides: Iterable[str]) -> dict:
    """Apply ``a.b=value`` overrides; values parse as JSON, else stay strings."""
    raw = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return raw


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    output_dir: Path
    regions: dict[str, list[str]]
    strictness: str = "lenient"
    workers: int | None = None
    capability_map: str | None = None
    human: HumanFlagConfig = field(default_factory=HumanFlagConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    max_sweeps: int = 50
    report: ReportConfig = field(default_factory=ReportConfig)
    raw: Mapping = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: Path | None = None) -> PipelineConfig:
        if "seed" not in data:
            raise ConfigError("config needs an explicit 'seed'")
        raw = _merge(DEFAULTS, data)
        base_dir = base_dir or Path.cwd()
        try:
            regions = {}
            for name, paths in raw["regions"].items():
                if isinstance(paths, str):
                    paths = [paths]
                if not re.fullmatch(r"[A-Za-z0-9._-]+", name):
                    raise ConfigError(f"region name {name!r} must be a plain identifier")
                regions[name] = [str((base_dir / p) if not Path(p).is_absolute() else Path(p)) for p in paths]
            cs = raw["credshare"]
            common = None
            if cs["common_credentials_file"]:
                common = load_common_credentials(base_dir / cs["common_credentials_file"])
            itv = raw["intervals"]
            feats = FeatureConfig(
                heuristic=HeuristicConfig(**raw["heuristic"]),
                intervals=IntervalConfig(**itv),
                credshare=CredShareConfig(
                    common_credentials=common,
                    common_rule=cs["common_rule"],
                    frequency_threshold=float(cs["frequency_threshold"]),
                    active_ttl=int(cs["active_ttl"]),
                ),
                optics=OpticsConfig(**raw["optics"]),
                spectral=SpectralConfig(seed=int(raw["seed"]), **raw["spectral"]),
            )
            report = ReportConfig(
                min_interval_fraction=1.0 - float(itv["co_cluster_distance_threshold"]), **raw["report"]
            )
            if raw["strictness"] not in ("strict", "lenient"):
                raise ConfigError(f"strictness must be strict or lenient, not {raw['strictness']!r}")
            cap = raw["capability_map"]
            return cls(
                seed=int(raw["seed"]),
                output_dir=Path(raw["output_dir"]) if Path(raw["output_dir"]).is_absolute() else base_dir / raw["output_dir"],
                regions=regions,
                strictness=raw["strictness"],
                workers=raw["workers"],
                capability_map=str(base_dir / cap) if cap else None,
                human=HumanFlagConfig(**raw["human"]),
                features=feats,
                max_sweeps=int(raw["consensus"]["max_sweeps"]),
                report=report,
                raw=raw,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def check_inputs(self) -> None:
        if not self.regions:
            raise ConfigError("config lists no input regions")
        for name, paths in self.regions.items():
            if not paths:
                raise ConfigError(f"region {name!r} has no input files")
            for p in paths:
                if not Path(p).is_file():
                    raise ConfigError(f"input file not found: {p}")

    def cap_map(self) -> CapabilityMap:
        return CapabilityMap.load(self.capability_map)

    def canonical_json(self) -> str:
        """Config as hashed into the manifest: no output location, inputs by file name."""
        raw = copy.deepcopy(dict(self.raw))
        raw.pop("output_dir", None)
        raw.pop("workers", None)
        raw["regions"] = {k: [Path(p).name for p in v] for k, v in sorted(self.regions.items())}
        return json.dumps(raw, sort_keys=True, separators=(",", ":"))


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return PipelineConfig.from_dict(apply_overrides(data, overrides), path.parent.resolve())


# --- small IO helpers -------------------------------------------------------


def write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def read_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"missing stage input {path}; run the earlier stage first") from None


@contextmanager
def incomplete_marker(folder: Path, stage: str):
    """Leave ``<stage>.incomplete`` behind if the stage dies half way."""
    folder.mkdir(parents=True, exist_ok=True)
    marker = folder / f"{stage}.incomplete"
    marker.write_text(f"stage {stage} started but did not finish\n")
    yield
    marker.unlink()


# --- stages -----------------------------------------------------------------


def stage_ingest(cfg: PipelineConfig, run_dir: Path) -> list[str]:
    """Parse every region's files; writes one session store per sensor region."""
    regions_out = []
    for label, paths in sorted(cfg.regions.items()):
        sessions, parse_report, assembly = ingest_files(paths, cfg.strictness, label)
        for region, recs in sorted(split_by_region(sessions).items()):
            region = region or label
            folder = run_dir / region
            with incomplete_marker(folder, "ingest"):
                write_json(folder / "sessions.json", sessions_to_dict(recs, region))
                write_json(
                    folder / "ingest_report.json",
                    {"parse": parse_report.to_dict(), "assembly": assembly.to_dict(), "inputs": [Path(p).name for p in paths]},
                )
            regions_out.append(region)
            logger.info("ingest %s: %d sessions", region, len(recs))
    return sorted(set(regions_out))


def stage_profile(cfg: PipelineConfig, folder: Path) -> None:
    with incomplete_marker(folder, "profile"):
        store = read_json(folder / "sessions.json")
        sessions = sessions_from_dict(store)
        profiles = build_profiles(sessions, cfg.human)
        write_json(folder / "profiles.json", profiles_to_dict(profiles, store.get("region", "")))
        logger.info("profile %s: %d IPs", folder.name, len(profiles))


def stage_features(cfg: PipelineConfig, folder: Path, only: Sequence[str] | None = None) -> None:
    with incomplete_marker(folder, "features"):
        profiles = profiles_from_dict(read_json(folder / "profiles.json"))
        res = run_features(profiles, cfg.features, cfg.cap_map(), only)
        out = folder / "features"
        out.mkdir(exist_ok=True)
        for name, part in res.partitions.items():
            write_partition(part, out / f"{name}.json", out / f"{name}.csv")
        if res.intervals is not None:
            write_json(out / "intervals_analysis.json", res.intervals.to_dict())


def load_feature_partitions(folder: Path) -> dict[str, Partition]:
    out = {}
    for name in METHODS:
        path = folder / "features" / f"{name}.json"
        if not path.exists():
            raise ConfigError(f"missing feature partition {path}; run the features stage first")
        out[name] = read_partition(path)
    return out


def stage_consensus(cfg: PipelineConfig, folder: Path) -> None:
    with incomplete_marker(folder, "consensus"):
        inputs = load_feature_partitions(folder)
        final, state = run_consensus(inputs, inputs["heuristic"], max_sweeps=cfg.max_sweeps)
        out = folder / "consensus"
        out.mkdir(exist_ok=True)
        (out / "ami_table.csv").write_text(ami_table({**inputs, "consensus": final}).to_csv())
        (out / "moves.jsonl").write_text(state.moves_jsonl())
        write_partition(final, out / "final.json", out / "final.csv")
        write_json(
            out / "state.json",
            {
                "schema_version": 1,
                "objective": state.objective,
                "trajectory": state.trajectory,
                "sweep_count": state.sweep_count,
                "converged": state.converged,
                "moves": len(state.moves_log),
                "active_inputs": state.active_inputs,
                "excluded_inputs": state.excluded,
            },
        )
        logger.info(
            "consensus %s: %d sweeps, %d moves, objective %.4f",
            folder.name, state.sweep_count, len(state.moves_log), state.objective,
        )


def stage_report(cfg: PipelineConfig, folder: Path) -> None:
    with incomplete_marker(folder, "report"):
        profiles = profiles_from_dict(read_json(folder / "profiles.json"))
        final = read_partition(folder / "consensus" / "final.json")
        itv_path = folder / "features" / "intervals_analysis.json"
        intervals = IntervalAnalysis.from_dict(read_json(itv_path)) if itv_path.exists() else None
        reports = feature_agreement(final, profiles, cfg.report, intervals, cfg.cap_map())
        out = folder / "report"
        out.mkdir(exist_ok=True)
        (out / "report.md").write_text(to_markdown(reports, f"Region {folder.name}"))
        (out / "report.json").write_text(to_json(reports))
        (out / "report.csv").write_text(to_csv(reports))


def run_region(cfg: PipelineConfig, folder: Path, stages: Sequence[str] = STAGES[1:]) -> str:
    for stage in stages:
        try:
            if stage == "profile":
                stage_profile(cfg, folder)
            elif stage == "features":
                stage_features(cfg, folder)
            elif stage == "consensus":
                stage_consensus(cfg, folder)
            elif stage == "report":
                stage_report(cfg, folder)
        except (ConfigError, AssertionError):
            raise
        except Exception as exc:
            raise StageError(stage, folder.name, exc) from exc
    return folder.name


def region_dirs(run_dir: Path) -> list[Path]:
    return sorted(p for p in run_dir.iterdir() if p.is_dir() and (p / "sessions.json").exists())


# --- manifest ---------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(cfg: PipelineConfig, run_dir: Path) -> dict:
    import numpy
    import scipy

    files = {}
    for path in sorted(run_dir.rglob("*")):
        rel = path.relative_to(run_dir).as_posix()
        if path.is_file() and rel not in ("manifest.json",) and not rel.endswith(".incomplete"):
            files[rel] = _sha256(path)
    manifest = {
        "schema_version": 1,
        "config_sha256": hashlib.sha256(cfg.canonical_json().encode()).hexdigest(),
        "inputs": {
            Path(p).name: _sha256(Path(p)) for paths in cfg.regions.values() for p in paths
        },
        "versions": {
            "honeycluster": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "files": files,
    }
    write_json(run_dir / "manifest.json", manifest)
    return manifest


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_pipeline(cfg: PipelineConfig, run_dir: Path | None = None) -> dict:
    """Full pipeline; returns the manifest. Raises before writing if inputs are missing."""
    cfg.check_inputs()
    run_dir = Path(run_dir or cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_json(run_dir / "config.json", json.loads(cfg.canonical_json()))
    with incomplete_marker(run_dir, "run"):
        try:
            regions = stage_ingest(cfg, run_dir)
        except (ConfigError, AssertionError):
            raise
        except Exception as exc:
            raise StageError("ingest", ",".join(cfg.regions), exc) from exc
        folders = [run_dir / r for r in regions]
        workers = cfg.workers or default_workers()
        if workers > 1 and len(folders) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(folders))) as pool:
                list(pool.map(run_region, [cfg] * len(folders), folders))
        else:
            for folder in folders:
                run_region(cfg, folder)
    return write_manifest(cfg, run_dir)
