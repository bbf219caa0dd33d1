"""Command-line interface.

Subcommands: sweep, whiten, truncated, john-sparsify, bernoulli, check.
Experiment subcommands read a flat key=value config file; `check` runs
the built-in invariant suite.  Exit codes: 0 on success, 1 when an
experiment or check fails, 2 for usage errors (unknown flags or
subcommands, missing or invalid config).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness
from .samplers import SamplerError, seed_from_env

EXPERIMENT_COMMANDS = ("sweep", "whiten", "truncated", "john-sparsify", "bernoulli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isotropy",
        description="Monte Carlo experiments on empirical second-moment concentration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENT_COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (ISOTROPY_SEED wins if set)")
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
    p = sub.add_parser("check", help="run the invariant suite")
    p.add_argument("--seed", type=int, default=None, help="master seed (ISOTROPY_SEED wins if set)")
    p.add_argument("--out", default=None, help="also write the check report here")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    return parser


def _emit(result: harness.ExperimentResult, out: str | None, fmt: str) -> None:
    render = harness.render_csv if fmt == "csv" else harness.render_json
    text = render(result.header, result.rows)
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    if result.aggregates is not None:
        agg_text = render(result.agg_header, result.aggregates)
        with open(harness.agg_output_path(out), "w", encoding="utf-8", newline="") as fh:
            fh.write(agg_text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "check":
        try:
            seed = seed_from_env(args.seed if args.seed is not None else 0)
        except SamplerError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        result = harness.run_check(seed=seed)
        for row in result.rows:
            status = "PASS" if row["ok"] else "FAIL"
            print(f"{status} {row['check']}: {row['detail']}")
        if args.out:
            _emit(result, args.out, args.format or "csv")
        failures = sum(1 for row in result.rows if not row["ok"])
        if failures:
            print(f"{failures} of {len(result.rows)} checks failed", file=sys.stderr)
            return 1
        print(f"all {len(result.rows)} checks passed")
        return 0

    if not os.path.isfile(args.config):
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        print(parser.format_usage(), end="", file=sys.stderr)
        return 2
    try:
        cfg = harness.load_config(args.config, kind=args.command)
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.seed = seed_from_env(cfg.seed)
        if args.out is not None:
            cfg.out = args.out
        if args.format is not None:
            cfg.format = args.format
        cfg.validate()
    except (harness.ConfigError, SamplerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage(), end="", file=sys.stderr)
        return 2

    try:
        result = harness.run_experiment(cfg)
    except (harness.ExperimentError, SamplerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _emit(result, cfg.out, cfg.format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
