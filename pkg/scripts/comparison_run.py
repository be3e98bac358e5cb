#!/usr/bin/env python3
"""Three-run comparison: a compact bump evolved between a lower and an upper barrier."""
import argparse
import json
from pathlib import Path

import numpy as np

from krsoliton.barrier import find_admissible_R
from krsoliton.flow import FlowConfig, flow_domain_for, make_initial_perturbation, run_flow
from krsoliton.runs import ordering_violation
from krsoliton.soliton import build_profile


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=float, default=0.1)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--height", type=float, default=0.05)
    ap.add_argument("--center", type=float, default=1.5)
    ap.add_argument("--width", type=float, default=2.5)
    ap.add_argument("--t-end", type=float, default=10.0)
    ap.add_argument("--out", default="results/comparison")
    args = ap.parse_args()

    R_lo, _ = find_admissible_R(2, args.K, args.alpha, "lower")
    R_up, _ = find_admissible_R(2, args.K, args.alpha, "upper")
    s_min, s_max, points = flow_domain_for(max(R_lo, R_up))
    stops = tuple(np.round(np.arange(0.25, args.t_end + 1e-9, 0.25), 10))
    cfg = FlowConfig(n=2, s_min=s_min, s_max=s_max, points=points, t_end=args.t_end, checkpoints=stops)
    base = build_profile(2, s_min, s_max, points)
    runs = {
        "lower": make_initial_perturbation("barrier_lower", {"K": args.K, "alpha": args.alpha, "R": R_lo}, cfg, base),
        "middle": make_initial_perturbation(
            "compact_bump", {"center": args.center, "width": args.width, "height": args.height,
                             "decay_K": args.K, "decay_alpha": args.alpha}, cfg, base),
        "upper": make_initial_perturbation("barrier_upper", {"K": args.K, "alpha": args.alpha, "R": R_up}, cfg, base),
    }
    results = {k: run_flow(v, cfg) for k, v in runs.items()}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, r in results.items():
        r.series.write_csv(out / f"diagnostics_{k}.csv")
    # pointwise gaps at each checkpoint, for plotting
    with open(out / "gaps.csv", "w") as fh:
        fh.write("t,min_mid_minus_lower,min_upper_minus_mid\n")
        for t in stops:
            lo, mid, up = (results[k].checkpoints[t].b for k in ("lower", "middle", "upper"))
            fh.write(f"{t!r},{float(np.min(mid - lo))!r},{float(np.min(up - mid))!r}\n")
    worst = ordering_violation(list(results.values()))
    summary = {"R_lower": R_lo, "R_upper": R_up, "worst_violation": worst,
               "status": {k: r.status for k, r in results.items()}}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
