#!/usr/bin/env python3
"""Space-time refinement of the bump flow: successive differences and observed order."""
import argparse
import json
import math
from pathlib import Path

import numpy as np

from krsoliton.flow import FlowConfig, make_initial_perturbation, run_flow


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--stepper", choices=("crank_nicolson", "explicit_rk4"), default="crank_nicolson")
    ap.add_argument("--t-end", type=float, default=1.0)
    ap.add_argument("--out", default="results/convergence")
    args = ap.parse_args()

    finals, rows = [], []
    points, dt = 351, 0.04
    for _ in range(args.levels):
        cfg = FlowConfig(points=points, dt=dt, t_end=args.t_end, adaptive=False,
                         stepper=args.stepper, diag_every=10**6)
        st0 = make_initial_perturbation("compact_bump", {"center": 8.0, "width": 4.0, "height": 0.1}, cfg)
        res = run_flow(st0, cfg)
        finals.append((points, dt, res.final.b))
        points, dt = 2 * points - 1, dt / 2
    for (p0, d0, b0), (_, _, b1) in zip(finals, finals[1:]):
        rows.append({"points": p0, "dt": d0, "diff": float(np.max(np.abs(b0 - b1[::2])))})
    for a, b in zip(rows, rows[1:]):
        a["ratio"] = a["diff"] / b["diff"]
        a["order"] = math.log2(a["ratio"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "convergence.json").write_text(json.dumps(rows, indent=2) + "\n")
    for r in rows:
        print(r)


if __name__ == "__main__":
    main()
