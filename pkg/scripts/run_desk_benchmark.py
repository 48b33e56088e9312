#!/usr/bin/env python3
"""Run the desk-scale factorization benchmark and print the summary table.

Equivalent to:  iadmm run --config scripts/desk_benchmark.json --out <dir>

The 25-trial grid at (200, 200) with a 2000-iteration budget takes on the
order of 15 minutes single-threaded; pass --jobs on multicore machines.
"""

import argparse
import sys
from pathlib import Path

from iadmm.bench import load_config, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("bench_out"))
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument(
        "--config",
        type=Path,
        default=Path(__file__).resolve().parent / "desk_benchmark.json",
    )
    args = parser.parse_args()
    cfg = load_config(args.config)
    summary = run_experiment(cfg, args.out, jobs=args.jobs)
    width = max(len(r["algorithm"]) for r in summary["rows"])
    for row in summary["rows"]:
        print(
            f"{row['algorithm']:>{width}s}  ({row['m']},{row['n']})  "
            f"mean {row['mean']:10.3f}  std {row['std']:8.3f}  "
            f"n={row['n_trials']}"
        )
    print(f"\nartifacts in {args.out}/ (summary.json, traces, plot data)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
