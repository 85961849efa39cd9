"""Command-line entry point for the experiment runs."""

from __future__ import annotations

import argparse
import json
import sys

from ridgegam.experiments import RUNNERS, ExperimentConfig

_SUBCOMMANDS = {
    "quad2d": "quad2d",
    "n-sweep": "n_sweep",
    "t-sweep": "t_sweep",
    "dir-sweep": "dir_sweep",
    "d1": "d1",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ridgegam")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kind = _SUBCOMMANDS[args.command]
    if args.config:
        config = ExperimentConfig.from_json_file(args.config)
        config.kind = kind
    else:
        config = ExperimentConfig(kind=kind)
    if args.out is not None:
        config.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    summary = RUNNERS[kind](config)
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
