"""Command line entry point: ``r2se <command> --config PATH [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .errors import R2seError

HANDLERS = {
    "gen-data": harness.cmd_gen_data,
    "pretrain": harness.cmd_pretrain,
    "allocate": harness.cmd_allocate,
    "refine": harness.cmd_refine,
    "fit-gate": harness.cmd_fit_gate,
    "eval": harness.cmd_eval,
    "report": harness.cmd_report,
    "ablate": harness.cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="r2se", description="Hard-case refinement pipeline for a desk-scale planner.")
    ap.add_argument("command", choices=harness.COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int, default=None, help="override the master seed")
    ap.add_argument("--out", default="run", help="run directory (default: ./run)")
    ap.add_argument("--runs", nargs="*", default=[], help="report: further run directories to join")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = harness.load_run(args.config, args.seed, args.out)
        if args.command == "report":
            entry = harness.cmd_report(run, args.runs)
        else:
            entry = HANDLERS[args.command](run)
    except (R2seError, OSError) as exc:
        print(f"r2se {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(entry, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
