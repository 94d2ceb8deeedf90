#!/usr/bin/env python3
"""Sliding- and cumulative-window studies on a corpus (or a synthetic drifting one).

Usage:
  python scripts/run_window_study.py --corpus corpus.jsonl --kind linear_svc
  python scripts/run_window_study.py --synthetic --out-prefix results/drift
"""

import argparse

from issuetriage import datagen, evalharness
from issuetriage.corpus import load_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus", help="JSONL corpus; omit with --synthetic")
    parser.add_argument("--synthetic", action="store_true",
                        help="use a generated 13-month drifting corpus")
    parser.add_argument("--kind", default="linear_svc")
    parser.add_argument("--max-delta", type=int, default=12)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-prefix", help="write <prefix>_sliding.csv and <prefix>_cumulative.csv")
    args = parser.parse_args()

    if args.synthetic:
        reports = datagen.drifting_corpus(n_months=args.max_delta + 1, seed=args.seed)
    elif args.corpus:
        reports = load_corpus(args.corpus).reports
    else:
        parser.error("need --corpus or --synthetic")

    for protocol, study in (("sliding", evalharness.sliding_window_study),
                            ("cumulative", evalharness.cumulative_window_study)):
        results = study(reports, kind=args.kind, max_delta=args.max_delta)
        print(f"\n{protocol} window protocol ({len(results)} cells)")
        for delta, acc in evalharness.mean_accuracy_per_delta(results).items():
            print(f"  delta {delta:>2}: mean accuracy {acc:.4f}")
        if args.out_prefix:
            path = f"{args.out_prefix}_{protocol}.csv"
            evalharness.write_window_csv(path, results)
            print(f"  wrote {path}")


if __name__ == "__main__":
    main()
