"""
Command line entry point.

    nimp run config.json --output-dir out/ [--seed 7] [--threads 4]
    nimp validate config.json

Errors are printed to stdout as a JSON object ``{"error": {...}}``.
Exit codes: 0 success, 2 invalid configuration, 1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, parse_config
from .runner import execute

THREADS_ENV = "NIMP_THREADS"


def _error(kind: str, message: str) -> dict:
    return {"error": {"type": kind, "message": message}}


def _load(path: str):
    with open(path) as fh:
        return parse_config(fh.read())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nimp", description="Noninvasive dynamic-correlation measurement simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a configuration")
    run.add_argument("config")
    run.add_argument("--output-dir", default=".")
    run.add_argument("--seed", type=int, default=None, help="override protocol.seed")
    run.add_argument("--threads", type=int, default=None, help=f"sampling threads (default ${THREADS_ENV} or 1)")

    val = sub.add_parser("validate", help="parse and validate a configuration, echoing it with defaults")
    val.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args.config)
    except ConfigError as exc:
        print(json.dumps(exc.to_json(), indent=2))
        return 2
    except OSError as exc:
        print(json.dumps(_error("io", str(exc)), indent=2))
        return 1

    if args.command == "validate":
        print(cfg.to_json())
        return 0

    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            print(json.dumps(_error("config-value", "seed must be in [0, 2^64)"), indent=2))
            return 2
        cfg = cfg.with_seed(args.seed)
    threads = args.threads if args.threads is not None else int(os.environ.get(THREADS_ENV, "1"))
    try:
        doc = execute(cfg, args.output_dir, max(1, threads))
    except (ValueError, ArithmeticError, OSError) as exc:
        print(json.dumps(_error(type(exc).__name__, str(exc)), indent=2))
        return 1
    print(json.dumps({"status": "ok", "result_file": os.path.join(args.output_dir, cfg.output.result), "files": doc["metadata"]["files"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
