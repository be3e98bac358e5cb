#!/usr/bin/env python3
"""Long stability run from a certified upper barrier; writes the diagnostics series."""
import argparse
import json
import time
from pathlib import Path

import numpy as np

from krsoliton import diagnostics as dg
from krsoliton.barrier import find_admissible_R
from krsoliton.flow import FlowConfig, flow_domain_for, make_initial_perturbation, run_flow


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--K", type=float, default=0.1)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--p", type=float, default=8.0)
    ap.add_argument("--t-end", type=float, default=50.0)
    ap.add_argument("--out", default="results/stability")
    args = ap.parse_args()

    t0 = time.perf_counter()
    R, _ = find_admissible_R(args.n, args.K, args.alpha)
    s_min, s_max, points = flow_domain_for(R)
    cfg = FlowConfig(n=args.n, s_min=s_min, s_max=s_max, points=points, t_end=args.t_end,
                     p=args.p, alpha=args.alpha, checkpoints=(1.0, 10.0, args.t_end))
    st0 = make_initial_perturbation("barrier_upper", {"K": args.K, "alpha": args.alpha, "R": R}, cfg)
    res = run_flow(st0, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.series.write_csv(out / "diagnostics.csv")
    s = res.series
    scale = float(np.max(np.abs(st0.b)))
    summary = {
        "R": R, "domain": [s_min, s_max, points], "status": res.status,
        "accepted": res.accepted, "rejected": res.rejected,
        "osc_nonincreasing": dg.nonincreasing(s.column("osc"), abs_tol=1e-10 * scale),
        "lp_nonincreasing": dg.nonincreasing(s.column("lp"), rel_tol=1e-6),
        "monotone_all": bool(np.all(s.column("monotone"))),
        "sup_ratio": float(s.column("sup")[-1] / s.column("sup")[0]),
        "lp_tail": dg.lp_tail(args.n, args.alpha, args.p).__dict__,
        "seconds": round(time.perf_counter() - t0, 2),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
