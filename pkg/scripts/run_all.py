#!/usr/bin/env python3
"""Run every verification scenario and collect reports under ./reports.

Usage: python scripts/run_all.py [--out DIR] [--seed N] [--svg] [--parallel]
Scenarios share nothing, so --parallel fans them out over processes.
Exit code 0 iff every row of every scenario passes.
"""
import argparse
import sys
from concurrent.futures import ProcessPoolExecutor

from delsarte.scenarios import ScenarioConfig, list_scenarios, run_scenario


def _run_one(args_tuple):
    name, out, seed, svg = args_tuple
    rows = run_scenario(ScenarioConfig(scenario=name, out_dir=out,
                                       seed=seed, svg=svg))
    return name, [(r.check, r.residual, r.threshold, r.passed) for r in rows]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="reports")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--svg", action="store_true")
    ap.add_argument("--parallel", action="store_true",
                    help="run scenarios concurrently (they share nothing)")
    args = ap.parse_args()

    jobs = [(name, args.out, args.seed, args.svg)
            for name, _ in list_scenarios()]
    if args.parallel:
        with ProcessPoolExecutor() as pool:
            results = dict((n, r) for n, r in pool.map(_run_one, jobs))
        results = [(name, results[name]) for name, _ in list_scenarios()]
    else:
        results = [_run_one(j) for j in jobs]

    all_ok = True
    for name, rows in results:
        ok = all(passed for *_, passed in rows)
        all_ok &= ok
        worst = max(rows, key=lambda r: r[1] - r[2])
        print(f"{'PASS' if ok else 'FAIL'}  {name:22s} {len(rows):2d} rows   "
              f"worst: {worst[0]} = {worst[1]:.3e}")
    print(f"\nreports written to {args.out}/")
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
