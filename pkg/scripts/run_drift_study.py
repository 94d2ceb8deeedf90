#!/usr/bin/env python3
"""Run the full sudden/gradual deterioration study and print the cell table.

Usage: python scripts/run_drift_study.py [--reps 1000] [--seed 0] [--out study.csv]
"""

import argparse
import time

from issuetriage import driftmon


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--penalty", type=float, default=driftmon.DEFAULT_PENALTY)
    parser.add_argument("--no-fast", action="store_true")
    parser.add_argument("--out", help="optional CSV path")
    args = parser.parse_args()

    t0 = time.monotonic()
    cells = driftmon.run_simulation_study(
        repetitions=args.reps, seed=args.seed, penalty=args.penalty,
        use_fast=not args.no_fast,
    )
    elapsed = time.monotonic() - t0

    print(f"{'mode':<8} {'drop':>5} {'rate':>6} {'min':>4} {'avg':>7} {'max':>4} "
          f"{'std':>6}  min_acc_at_detection")
    for c in cells:
        acc = "" if c.min_mean_accuracy_at_detection is None else \
            f"{c.min_mean_accuracy_at_detection:.4f}"
        print(f"{c.mode:<8} {round(c.drop_points * 100):>4}p {c.detection_rate:>6.3f} "
              f"{c.min_time:>4} {c.avg_time:>7.2f} {c.max_time:>4} {c.std_time:>6.2f}  {acc}")
    print(f"\n{args.reps} repetitions/cell in {elapsed:.1f}s")
    if args.out:
        driftmon.write_study_csv(args.out, cells)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
