"""Command line entry point: run a configured experiment and write reports."""

import argparse
import sys

from . import config as cfgmod
from . import harness
from .errors import (
    ConfigError,
    FlowConstructionError,
    UnderResolvedError,
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flowot",
        description="run a verification experiment from a YAML config",
    )
    parser.add_argument("--config", required=True, help="path to the YAML config")
    parser.add_argument(
        "--experiment",
        default=None,
        choices=cfgmod.EXPERIMENTS,
        help="override the experiment named in the config",
    )
    parser.add_argument("--out", required=True, help="output directory for reports")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument(
        "--resolution", type=int, default=None, help="override cloud size n_points"
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config)
        if args.experiment is not None:
            cfg.experiment = args.experiment
        if args.seed is not None:
            cfg.seed = args.seed
        if args.resolution is not None:
            if args.resolution > cfgmod.MAX_EXACT_POINTS:
                raise ConfigError(
                    f"--resolution {args.resolution} exceeds the exact-solver cap "
                    f"{cfgmod.MAX_EXACT_POINTS}"
                )
            cfg.resolution["n_points"] = args.resolution
        return harness.run(cfg, args.out)
    except (ConfigError, FlowConstructionError, UnderResolvedError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
