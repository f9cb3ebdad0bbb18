"""Command-line front end.

Subcommands: rates (JSON regime report), convergence (CSV sweep), gap (CSV
paired speedup experiment), selftest (invariant suite).  Exit codes: 0 on
success, 1 on invariant failure, 2 on invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import ConfigError, cmd_convergence, cmd_gap, cmd_rates, load_config

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paramint",
        description="Randomized multilevel parametric integration experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
            ("rates", "print the regime/rate report for a spec (JSON)"),
            ("convergence", "run an error sweep over a budget grid (CSV)"),
            ("gap", "paired non-adaptive vs adaptive experiment (CSV)"),
            ("selftest", "run the invariant suite")]:
        p = sub.add_parser(name, help=helptext)
        if name != "selftest":
            p.add_argument("--config", required=True, help="JSON config path")
            p.add_argument("--out", default=None, help="output path override")
            p.add_argument("--seed", type=int, default=None,
                           help="seed override (64-bit)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for replications")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            from .selftest import run_all
            return 0 if run_all() else 1

        require_alg = args.command == "convergence"
        cfg = load_config(args.config, require_algorithm=require_alg)
        if args.seed is not None:
            cfg.seed = int(args.seed)
        if args.threads is not None:
            cfg.threads = int(args.threads)
        if args.out is not None:
            cfg.out = args.out

        if args.command == "rates":
            report = cmd_rates(cfg.spec)
            text = json.dumps(report, indent=2, sort_keys=True)
            if cfg.out:
                with open(cfg.out, "w") as fh:
                    fh.write(text + "\n")
            else:
                print(text)
            return 0
        if args.command == "convergence":
            _, slope, text = cmd_convergence(cfg)
            if not cfg.out:
                sys.stdout.write(text)
            else:
                print(f"slope={slope:.4f} -> {cfg.out}")
            return 0
        if args.command == "gap":
            _, slope, text = cmd_gap(cfg)
            if not cfg.out:
                sys.stdout.write(text)
            else:
                print(f"ratio_slope={slope:.4f} -> {cfg.out}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
