"""Command-line entry points: train, compare, export-dot."""

from __future__ import annotations

import argparse
import sys

from .harness import ConfigError, export_cat_dot, load_config, run_comparison, run_experiment


def _add_override_args(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("--env", help="override environment name")
    p.add_argument("--size", type=int, help="override environment size")
    p.add_argument("--episodes", type=int, help="override training episode count")
    p.add_argument("--out", help="override output directory")


def _overrides(args) -> dict:
    keys = ("seed", "env", "size", "episodes", "out")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="catrl")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run the configured algorithm across seeds")
    _add_override_args(train)

    compare = sub.add_parser("compare", help="run dar_rl and q_learning with shared seeds")
    _add_override_args(compare)

    dot = sub.add_parser("export-dot", help="render a cat document as DOT")
    dot.add_argument("--cat", required=True, help="path to a cat JSON document")

    args = parser.parse_args(argv)
    try:
        if args.command == "export-dot":
            with open(args.cat) as fh:
                sys.stdout.write(export_cat_dot(fh.read()))
            return 0
        config = load_config(args.config, _overrides(args))
        runner = run_comparison if args.command == "compare" else run_experiment
        for path in runner(config):
            print(path)
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
