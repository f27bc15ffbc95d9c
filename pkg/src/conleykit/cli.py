"""Command line entry point.

    conleykit <subcommand> (--config PATH | --scenario NAME) [--out report.json]
              [--cells-out DIR] [--threads N] [--seed S]

Exit codes: 0 all checks pass (or are inconclusive/skipped), 1 some check
fails, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import CATALOG, ConfigError, load_config, load_scenario
from .pipeline import FAIL, SECTIONS, run

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="conleykit",
        description="Index pairs, Lyapunov functions and cuplength bounds on cubical grids.")
    p.add_argument("subcommand", choices=SECTIONS + ("all",), help="stage to run")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="path to a JSON scenario file")
    src.add_argument("--scenario", choices=CATALOG, help="built-in catalog scenario")
    p.add_argument("--out", help="write the JSON report here (default: stdout)")
    p.add_argument("--cells-out", help="directory for cell-set and Lyapunov CSV dumps")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads (results do not depend on this)")
    p.add_argument("--seed", type=int, default=None, help="sampling seed (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        config = load_scenario(args.scenario) if args.scenario else load_config(args.config)
    except ConfigError as exc:
        print(f"conleykit: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = run(config, args.subcommand, threads=args.threads, seed=args.seed,
                 cells_out=args.cells_out)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    for name, sec in report["results"].items():
        print(f"{name}: {sec['status']}", file=sys.stderr)
    return EXIT_FAIL if report["status"] == FAIL else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
