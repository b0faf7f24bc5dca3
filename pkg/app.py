import argparse
import json
import logging
import sys
import time
from typing import List, Optional

from config.scenario_config import ScenarioConfig, load_config, schema
from config.settings import settings
from services.scenario_service import scenario_service, validate_config
from utils.errors import ConfigError, MagflowError
from utils.helpers import format_duration

logger = logging.getLogger(__name__)

# CLI subcommand -> scenario name
COMMANDS = {
    "constants": "constants",
    "orbits": "orbits",
    "isoperimetric": "isoperimetric",
    "flow": "flow",
    "index-sweep": "index_sweep",
    "report": "full_report",
}

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

def configure_logging():
    level = "DEBUG" if settings.DEBUG else settings.LOG_LEVEL
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magflow",
                                     description="Closed magnetic orbits on tori: constants, orbits and flows")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, scenario in COMMANDS.items():
        p = sub.add_parser(command, help=f"run the {scenario} scenario")
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="solver rng seed")
        p.add_argument("--resolution", type=int, help="loop sample count N")
    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--config", required=True, help="scenario JSON file")
    sub.add_parser("schema", help="print the scenario JSON schema")
    return parser

def apply_overrides(config: ScenarioConfig, scenario: str, args: argparse.Namespace) -> ScenarioConfig:
    """Command-line flags take precedence over the scenario file"""
    update = {"scenario": scenario}
    if args.resolution is not None:
        if args.resolution < 8:
            raise ConfigError("--resolution must be at least 8", "/resolution")
        update["resolution"] = args.resolution
    if args.seed is not None:
        update["solver"] = config.solver.model_copy(update={"rng_seed": args.seed})
    if args.out is not None:
        update["outputs"] = config.outputs.model_copy(update={"directory": args.out})
    return config.model_copy(update=update)

def run_validate(path: str) -> int:
    diag = validate_config(path)
    for message in diag.errors:
        print(f"error: {message}")
    for message in diag.warnings:
        print(f"warning: {message}")
    for message in diag.notices:
        print(f"notice: {message}")
    if diag.ok:
        print(f"{path}: ok")
    return EXIT_OK if diag.ok else EXIT_CONFIG

def run_command(args: argparse.Namespace) -> int:
    try:
        config = apply_overrides(load_config(args.config), COMMANDS[args.command], args)
    except ConfigError as e:
        print(f"error: {e}" + (f" (at {e.pointer})" if e.pointer else ""))
        return EXIT_CONFIG
    try:
        report = scenario_service.run_scenario(config)
    except ConfigError as e:
        print(f"error: {e}" + (f" (at {e.pointer})" if e.pointer else ""))
        return EXIT_CONFIG
    except MagflowError as e:
        print(f"error: {e}")
        return EXIT_FAILED
    for message in report["warnings"]:
        print(f"warning: {message}")
    summary = report["summary"]
    for path in report["files"]:
        print(f"wrote {path}")
    if summary["passed"]:
        print(f"{config.scenario}: all {summary['count']} assertions passed")
        return EXIT_OK
    print(f"{config.scenario}: {len(summary['failed'])} of {summary['count']} assertions failed")
    for name in summary["failed"]:
        print(f"  FAILED {name}")
    return EXIT_FAILED

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    if args.command == "schema":
        print(json.dumps(schema(), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command == "validate":
        return run_validate(args.config)
    start = time.perf_counter()
    code = run_command(args)
    logger.info("%s finished in %s", args.command, format_duration(time.perf_counter() - start))
    return code

if __name__ == "__main__":
    sys.exit(main())
