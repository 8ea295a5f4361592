"""Command line entry point.

    delsarte run <scenario> [--config path] [--out dir] [--svg] [--seed N]
                            [--timings]
    delsarte list

Exit code 0 iff every report row passes.  Log level comes from the
DELSARTE_LOG environment variable (DEBUG/INFO/WARNING/...).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .scenarios import (SCENARIOS, ScenarioConfig, list_scenarios, rows_to_csv,
                        run_scenario)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delsarte",
                                description="transmutation-operator laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run a named scenario")
    runp.add_argument("scenario", help="scenario name (see `delsarte list`)")
    runp.add_argument("--config", help="JSON/TOML scenario descriptor")
    runp.add_argument("--out", help="output directory for CSV/JSON/SVG reports")
    runp.add_argument("--svg", action="store_true", help="emit SVG profile plots")
    runp.add_argument("--seed", type=int, default=None, help="random seed")
    runp.add_argument("--timings", action="store_true",
                      help="write real wall times into the CSV "
                           "(breaks byte-level reproducibility)")

    sub.add_parser("list", help="list scenarios")
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("DELSARTE_LOG", "WARNING").upper())
    args = _build_parser().parse_args(argv)

    if args.command == "list":
        for name, desc in list_scenarios():
            print(f"{name:22s} {desc}")
        return 0

    if args.config:
        try:
            config = ScenarioConfig.from_file(args.config)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if args.scenario and args.scenario != config.scenario:
            print(f"error: config names scenario {config.scenario!r} but "
                  f"{args.scenario!r} was requested", file=sys.stderr)
            return 2
    else:
        config = ScenarioConfig(scenario=args.scenario)
    if args.out:
        config.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.svg:
        config.svg = True
    if args.timings:
        config.timings = True

    if config.scenario not in SCENARIOS:
        names = ", ".join(sorted(SCENARIOS))
        print(f"error: unknown scenario {config.scenario!r}; valid: {names}",
              file=sys.stderr)
        return 2

    rows = run_scenario(config)
    sys.stdout.write(rows_to_csv(rows))
    return 0 if all(r.passed for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
