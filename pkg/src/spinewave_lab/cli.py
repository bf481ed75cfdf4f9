"""``spinewave-lab`` command-line entry point.

Exit codes: 0 success, 2 configuration or validation error (nothing is
written), 3 runtime failure (any partial database is kept on disk).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import (
    ConfigError,
    build_cpg,
    build_ego,
    build_problem,
    build_ribcage,
    load_config,
    resolve_seed,
)
from .experiment import (
    load_manifest,
    run_cpg_sim,
    run_krig_fit,
    run_magnetics_sweep,
    run_optimize,
    write_manifest,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("spinewave_lab")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (defaults are used if omitted)")
    common.add_argument("--seed", type=int, help="overrides the config seed and $SPINEWAVE_SEED")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, e.g. ego.n_infill=20 (repeatable)")
    common.add_argument("--out", type=Path, help="output directory (default: output.dir)")
    common.add_argument("--threads", type=int, default=1, help="worker cap for likelihood multistarts")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spinewave-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("cpg-sim", parents=[common], help="simulate the oscillator chain, write trajectory.csv")
    krig = sub.add_parser("krig-fit", parents=[common], help="fit a Kriging model to a CSV dataset")
    krig.add_argument("--data", type=Path, required=True, help="CSV with header; last column is the response")
    opt = sub.add_parser("optimize", parents=[common], help="run EGO on a swimming scenario")
    opt.add_argument("--scenario", choices=["s1", "s2", "s3", "s4"], help="default: plant.scenario")
    sub.add_parser("magnetics-sweep", parents=[common], help="write the joint torque curve")
    sub.add_parser("resume", parents=[common], help="continue an interrupted optimize run in --out")
    return parser


def _prepare(args) -> tuple[dict, int, Path, str | None]:
    if args.threads < 1:
        raise ConfigError("--threads", "must be >= 1")
    if args.command == "resume":
        if args.out is None:
            raise ConfigError("--out", "resume needs the run directory")
        manifest = load_manifest(args.out)
        return manifest["config"], manifest["seed"], args.out, manifest["scenario"]
    config = load_config(args.config, args.overrides)
    seed = resolve_seed(config, args.seed)
    config["seed"] = seed
    out = args.out if args.out is not None else Path(config["output"]["dir"])
    scenario = None
    if args.command == "optimize":
        scenario = args.scenario or config["plant"]["scenario"]
        config["plant"]["scenario"] = scenario
    return config, seed, out, scenario


def _validate(args, config, seed, scenario) -> None:
    """Build every object the command needs before anything touches the disk."""
    if args.command == "cpg-sim":
        build_cpg(config)
    elif args.command == "magnetics-sweep":
        build_ribcage(config)
    elif args.command in ("optimize", "resume"):
        problem = build_problem(config, scenario)
        build_ego(config, problem.dim, problem.bounds, problem.minimize, seed, args.threads)
    elif args.command == "krig-fit" and not args.data.is_file():
        raise ConfigError("--data", f"file not found: {args.data}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config, seed, out, scenario = _prepare(args)
        _validate(args, config, seed, scenario)
        out.mkdir(parents=True, exist_ok=True)
        if args.command != "resume":
            if args.command == "optimize" and (out / "database.jsonl").exists() \
                    and (out / "database.jsonl").stat().st_size:
                raise ConfigError("--out", f"{out} already holds a run; use 'resume' to continue it")
            write_manifest(out, args.command, config, seed, scenario=scenario)
    except ConfigError as exc:
        print(f"spinewave-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "cpg-sim":
            summary = run_cpg_sim(config, out)
        elif args.command == "krig-fit":
            summary = run_krig_fit(config, out, args.data, seed, args.threads)
        elif args.command == "magnetics-sweep":
            summary = run_magnetics_sweep(config, out)
        else:
            summary = run_optimize(config, out, scenario, seed, args.threads,
                                   resume=args.command == "resume")
    except ConfigError as exc:
        print(f"spinewave-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError, ArithmeticError, OSError) as exc:
        print(f"spinewave-lab: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
