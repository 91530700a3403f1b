"""Command line entry point.

Exit codes: 0 on success, 1 for configuration errors, 2 for numerical
failures (the message names the seed and scheme).
"""

from __future__ import annotations

import argparse
import sys

from .config import SCHEMA, ConfigError, load_config
from .experiments import NumericalFailure, run_ipc, run_narma, sweep, write_results

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

_RUNNERS = {"run-narma": run_narma, "run-ipc": run_ipc, "sweep": sweep}


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvqrc", description="Gaussian quantum reservoir benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run-narma", "NARMA NMSE per scheme and realization"),
        ("run-ipc", "information processing capacity per scheme and realization"),
        ("sweep", "run the config's task across the values of its sweep block"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=_u64, help="override base_seed")
        p.add_argument("--realizations", type=_positive, help="override realizations")
        p.add_argument("--out", help="output directory (overrides 'output')")
        p.add_argument("--workers", type=_positive, help="parallel realizations")
    p = sub.add_parser("validate-config", help="check a config file and exit")
    p.add_argument("--config", required=True)
    sub.add_parser("show-schema", help="print the documented config layout")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "show-schema":
        sys.stdout.write(SCHEMA)
        return EXIT_OK
    try:
        config = load_config(args.config)
        if args.command == "validate-config":
            print(f"{args.config}: ok ({config.task_kind}, {len(config.schemes)} schemes, sha256 {config.digest()[:12]})")
            return EXIT_OK
        overrides = {
            "base_seed": args.seed,
            "realizations": args.realizations,
            "output": args.out,
            "workers": args.workers,
        }
        config = config.with_overrides(**overrides)
        table = _RUNNERS[args.command](config)
        paths = write_results(table, config, config.output, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERICAL
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
