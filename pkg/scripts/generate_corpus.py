#!/usr/bin/env python3
"""Generate a synthetic issue-report corpus as JSONL.

Usage: python scripts/generate_corpus.py --style spread --n 1000 --out corpus.jsonl
"""

import argparse

from issuetriage import datagen
from issuetriage.corpus import save_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--style", choices=["keyword", "drifting", "spread"],
                        default="spread")
    parser.add_argument("--n", type=int, default=1000,
                        help="documents (keyword/spread) or documents per month (drifting)")
    parser.add_argument("--classes", type=int, default=5)
    parser.add_argument("--months", type=int, default=13)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    if args.style == "keyword":
        reports = datagen.keyword_corpus(args.n, args.classes, seed=args.seed)
    elif args.style == "drifting":
        reports = datagen.drifting_corpus(n_months=args.months, docs_per_month=args.n,
                                          n_classes=args.classes, seed=args.seed)
    else:
        reports = datagen.spread_corpus(args.n, n_classes=args.classes,
                                        n_months=args.months, seed=args.seed)
    save_corpus(args.out, reports)
    print(f"wrote {len(reports)} reports to {args.out}")


if __name__ == "__main__":
    main()
