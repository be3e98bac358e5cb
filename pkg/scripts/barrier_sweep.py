#!/usr/bin/env python3
"""Smallest admissible R over a (K, alpha) grid, for both barrier sides."""
import argparse
import csv
from pathlib import Path

from krsoliton.barrier import SearchError, find_admissible_R


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--K", type=float, nargs="+", default=[0.01, 0.1, 0.3, 1.0])
    ap.add_argument("--alpha", type=float, nargs="+", default=[0.25, 0.5, 0.9])
    ap.add_argument("--R-max", type=float, default=1024.0)
    ap.add_argument("--out", default="results/barrier_sweep.csv")
    args = ap.parse_args()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "side", "K", "alpha", "R", "min_margin", "binding"])
        for n in args.n:
            for side in ("upper", "lower"):
                for K in args.K:
                    for a in args.alpha:
                        try:
                            R, rep = find_admissible_R(n, K, a, side, args.R_max)
                        except SearchError:
                            w.writerow([n, side, K, a, "", "", "exhausted"])
                            continue
                        m = min(rep.margins, key=lambda m: m.min)
                        w.writerow([n, side, K, a, R, repr(m.min), m.name])
                        print(n, side, K, a, R, m.name)


if __name__ == "__main__":
    main()
