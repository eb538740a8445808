"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .features import METHODS
from .ingest import IngestError, sessions_from_dict
from .pipeline import (
    ConfigError,
    PipelineConfig,
    StageError,
    load_config,
    read_json,
    region_dirs,
    run_pipeline,
    stage_consensus,
    stage_features,
    stage_ingest,
    stage_profile,
    stage_report,
    write_json,
    write_manifest,
)
from .profile import ProfileError, hassh_stats, port_stats, profiles_from_dict
from .synth import SynthError, load_scenario, write_campaign

logger = logging.getLogger("honeycluster")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="pipeline config (JSON)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. --set optics.xi=0.1 (repeatable)")
    p.add_argument("--run-dir", type=Path, help="run directory (default: config output_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="honeycluster", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every stage end to end")
    _add_config_args(p)

    for name, text in (
        ("ingest", "parse logs into per-region session stores"),
        ("profile", "aggregate sessions into per-IP profiles"),
        ("features", "run the per-feature clusterings"),
        ("consensus", "combine feature partitions into the final clustering"),
        ("report", "write per-cluster feature-agreement reports"),
    ):
        p = sub.add_parser(name, help=text)
        _add_config_args(p)
        if name != "ingest":
            p.add_argument("--region", action="append", help="limit to these regions")
        if name == "features":
            p.add_argument("--only", action="append", choices=METHODS, help="run only these methods")

    p = sub.add_parser("synth", help="generate a synthetic campaign with ground truth")
    p.add_argument("--scenario", required=True, help="library scenario name or path to a scenario JSON")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--write-config", action="store_true", help="also write a pipeline config for the log")

    p = sub.add_parser("stats", help="summary statistics of an ingested run")
    p.add_argument("--run-dir", type=Path, required=True)
    p.add_argument("--region", action="append")
    p.add_argument("--top", type=int, default=10, help="hassh values to list")
    return parser


def _config(args) -> tuple[PipelineConfig, Path]:
    cfg = load_config(args.config, args.overrides)
    return cfg, Path(args.run_dir or cfg.output_dir)


def _folders(run_dir: Path, regions) -> list[Path]:
    if not run_dir.is_dir():
        raise ConfigError(f"run directory not found: {run_dir}")
    folders = region_dirs(run_dir)
    if regions:
        missing = set(regions) - {f.name for f in folders}
        if missing:
            raise ConfigError(f"unknown regions: {sorted(missing)}")
        folders = [f for f in folders if f.name in regions]
    if not folders:
        raise ConfigError(f"no ingested regions under {run_dir}")
    return folders


def cmd_stage(args) -> int:
    cfg, run_dir = _config(args)
    if args.command == "ingest":
        cfg.check_inputs()
        run_dir.mkdir(parents=True, exist_ok=True)
        write_json(run_dir / "config.json", json.loads(cfg.canonical_json()))
        regions = stage_ingest(cfg, run_dir)
        print("\n".join(regions))
    else:
        for folder in _folders(run_dir, args.region):
            if args.command == "profile":
                stage_profile(cfg, folder)
            elif args.command == "features":
                stage_features(cfg, folder, args.only)
            elif args.command == "consensus":
                stage_consensus(cfg, folder)
            else:
                stage_report(cfg, folder)
    write_manifest(cfg, run_dir)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, run_dir = _config(args)
    manifest = run_pipeline(cfg, run_dir)
    logger.info("wrote %d files to %s", len(manifest["files"]), run_dir)
    return EXIT_OK


def cmd_synth(args) -> int:
    scenario = load_scenario(args.scenario)
    campaign = scenario.generate(args.seed)
    paths = write_campaign(campaign, args.out, scenario.name)
    if args.write_config:
        cfg = {
            "seed": campaign.seed,
            "output_dir": "run",
            "regions": {campaign.region: [paths["log"].name]},
        }
        (args.out / "pipeline.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))
    return EXIT_OK


def cmd_stats(args) -> int:
    out = {}
    for folder in _folders(args.run_dir, args.region):
        sessions = sessions_from_dict(read_json(folder / "sessions.json"))
        entry = {
            "sessions": len(sessions),
            "ips": len({s.src_ip for s in sessions.values()}),
            "outbound_ports": port_stats(sessions),
        }
        prof_path = folder / "profiles.json"
        if prof_path.exists():
            profiles = profiles_from_dict(read_json(prof_path))
            entry["human_sessions"] = sum(len(p.human_sessions) for p in profiles.values())
            entry["hassh"] = [
                {"hassh": h, "sessions": s, "ips": n}
                for h, (s, n) in list(hassh_stats(profiles).items())[: args.top]
            ]
        out[folder.name] = entry
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "synth": cmd_synth, "stats": cmd_stats}.get(args.command, cmd_stage)
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        if isinstance(exc.cause, AssertionError):
            print(f"invariant violation: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (IngestError, ProfileError, SynthError, OSError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    raise SystemExit(main())
