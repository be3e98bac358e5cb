"""krs: command line driver.

Exit codes: 0 ok, 1 usage, 2 soliton solver failure, 3 R search exhausted,
4 flow aborted (also returned when a flow verdict fails).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .barrier import (BarrierSpec, SearchError, certify_spec, find_admissible_R,
                      write_barrier_csv)
from .runs import execute, ordering_violation, parse_config, run_verdicts, summarize, ORDER_TOL
from .soliton import SolverError, build_profile, write_profile_csv
from .state import write_state_csv

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_SEARCH, EXIT_FLOW = 0, 1, 2, 3, 4

log = logging.getLogger("krsoliton")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class Manifest:
    """Records every file written under an output directory."""

    def __init__(self, command: str, out: Path, config_bytes: bytes):
        self.command = command
        self.out = out
        self.digest = hashlib.sha256(config_bytes).hexdigest()
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.files: list[str] = []
        self.verdicts: dict = {}

    def add(self, path: Path) -> Path:
        self.files.append(str(path.relative_to(self.out)))
        return path

    def write(self) -> None:
        _dump_json(self.out / "manifest.json", {
            "command": self.command,
            "config_digest": self.digest,
            "tool_version": __version__,
            "started": self.started,
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "outputs": sorted(self.files + ["manifest.json"]),
            "verdicts": self.verdicts,
        })


def _args_bytes(args: argparse.Namespace) -> bytes:
    d = {k: v for k, v in vars(args).items() if k != "func"}
    return json.dumps(d, sort_keys=True).encode()


def cmd_soliton(args) -> int:
    if args.points < 2:
        raise UsageError("--points must be >= 2")
    if not args.s_min < args.s_max:
        raise UsageError("--s-min must be < --s-max")
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    try:
        prof = build_profile(args.n, args.s_min, args.s_max, args.points, args.tol)
    except SolverError as exc:
        log.error("soliton solver failed: %s (s=%s)", exc, exc.s)
        return EXIT_SOLVER
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("soliton", out, _args_bytes(args))
    write_profile_csv(man.add(out / "profile.csv"), prof)
    report = {
        "n": args.n,
        "points": args.points,
        "s_min": args.s_min,
        "s_max": args.s_max,
        "ode_residual_max": float(prof.ode_residual().max()),
        "implicit_residual_max": float(prof.implicit_residual().max()),
        "invariants": prof.check_invariants(),
        "flow_ready": prof.flow_ready,
    }
    if args.n == 1:
        report["closed_form_max_dev"] = float(np.max(np.abs(prof.phi - np.logaddexp(0.0, prof.grid))))
    _dump_json(man.add(out / "report.json"), report)
    man.verdicts = {"invariants": "pass" if all(report["invariants"].values()) else "fail"}
    man.write()
    return EXIT_OK


def cmd_barrier(args) -> int:
    if args.n < 2:
        raise UsageError("barriers need n >= 2: for n = 1 the construction does not work "
                         "(phi''^2 - phi' phi''' ~ e^-s rules it out)")
    if (args.R is None) == (not args.find_R):
        raise UsageError("give exactly one of --R or --find-R")
    out = Path(args.out)
    if args.find_R:
        try:
            R, _ = find_admissible_R(args.n, args.K, args.alpha, args.side, args.R_max, args.s_min)
        except SearchError as exc:
            log.error("%s", exc)
            out.mkdir(parents=True, exist_ok=True)
            man = Manifest("barrier", out, _args_bytes(args))
            if exc.last_report is not None:
                _dump_json(man.add(out / "certification.json"), exc.last_report.to_dict())
            man.verdicts = {"certified": "fail"}
            man.write()
            return EXIT_SEARCH
    else:
        R = args.R
    try:
        spec = BarrierSpec(args.K, args.alpha, R, args.side, args.n)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    bp, rep = certify_spec(spec, args.s_min)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("barrier", out, _args_bytes(args))
    write_barrier_csv(man.add(out / "barrier.csv"), bp)
    _dump_json(man.add(out / "certification.json"), rep.to_dict())
    man.verdicts = {"certified": "pass" if rep.certified else "fail"}
    man.write()
    return EXIT_OK if rep.certified else EXIT_SEARCH


def _fmt_time(t: float) -> str:
    return format(t, ".10g")


def cmd_flow(args) -> int:
    cfg_path = Path(args.config)
    try:
        raw_bytes = cfg_path.read_bytes()
        spec = parse_config(json.loads(raw_bytes))
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"bad config: {exc}") from exc
    out = Path(args.out_dir)
    try:
        initials, results = execute(spec)
    except SearchError as exc:
        log.error("%s", exc)
        return EXIT_SEARCH
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad initial data: {exc}") from exc
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("flow", out, raw_bytes)

    labels = ["run"] if len(results) == 1 else ["lower", "middle", "upper"]
    summary = {"config_digest": man.digest, "runs": {}}
    verdicts: dict[str, bool] = {}
    for label, init_spec, init, res in zip(labels, spec.initials, initials, results):
        sub = out if len(results) == 1 else out / label
        sub.mkdir(exist_ok=True)
        res.series.write_csv(man.add(sub / "diagnostics.csv"))
        for t, st in sorted(res.checkpoints.items()):
            write_state_csv(man.add(sub / f"state_t{_fmt_time(t)}.csv"), st)
        v = run_verdicts(init_spec["kind"], init, res)
        summary["runs"][label] = {**summarize(init, res),
                                  "verdicts": {k: "pass" if ok else "fail" for k, ok in v.items()}}
        for k, ok in v.items():
            key = k if len(results) == 1 else f"{label}: {k}"
            verdicts[key] = ok
    if spec.comparison:
        worst = ordering_violation(results)
        summary["ordering_violation"] = worst
        verdicts["ordering preserved"] = worst <= ORDER_TOL
    summary["verdicts"] = {k: "pass" if ok else "fail" for k, ok in verdicts.items()}
    _dump_json(man.add(out / "summary.json"), summary)
    man.verdicts = summary["verdicts"]
    man.write()
    for k, ok in verdicts.items():
        log.info("%s: %s", k, "pass" if ok else "fail")
    if any(r.status != "ok" for r in results):
        return EXIT_FLOW
    return EXIT_OK if all(verdicts.values()) else EXIT_FLOW


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="krs", description="Kahler-Ricci soliton stability laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ps = sub.add_parser("soliton", help="compute the soliton profile")
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--s-min", type=float, default=-10.0)
    ps.add_argument("--s-max", type=float, default=60.0)
    ps.add_argument("--points", type=int, default=1401)
    ps.add_argument("--tol", type=float, default=1e-12)
    ps.add_argument("--out", default="soliton_out")
    ps.set_defaults(func=cmd_soliton)

    pb = sub.add_parser("barrier", help="build and certify a barrier")
    pb.add_argument("--n", type=int, required=True)
    pb.add_argument("--K", type=float, required=True)
    pb.add_argument("--alpha", type=float, default=0.5)
    pb.add_argument("--R", type=float)
    pb.add_argument("--find-R", action="store_true")
    pb.add_argument("--R-max", type=float, default=1024.0)
    pb.add_argument("--side", choices=("upper", "lower"), default="upper")
    pb.add_argument("--s-min", type=float, default=0.1)
    pb.add_argument("--out", default="barrier_out")
    pb.set_defaults(func=cmd_barrier)

    pf = sub.add_parser("flow", help="run the radial flow from a JSON config")
    pf.add_argument("--config", required=True)
    pf.add_argument("--out-dir", required=True)
    pf.set_defaults(func=cmd_flow)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"krs {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
