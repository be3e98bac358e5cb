"""Run configs, verdicts and the three-run comparison harness."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import diagnostics as dg
from .flow import FlowConfig, FlowResult, make_initial_perturbation, run_flow
from .soliton import build_profile
from .state import RadialState

CONFIG_KEYS = {f.name for f in fields(FlowConfig)}
BARRIER_KINDS = ("barrier_upper", "barrier_lower")

# verdict tolerances
STATIONARY_TOL = 1e-8
MAX_PRINCIPLE_REL = 1e-8
OSC_REL = 1e-10
LP_REL = 1e-6
ORDER_TOL = 1e-8
MARGIN_FRACTION = 0.5


@dataclass
class RunSpec:
    cfg: FlowConfig
    initials: list[dict]

    @property
    def comparison(self) -> bool:
        return len(self.initials) == 3


def parse_config(raw: dict) -> RunSpec:
    """Split a run-config mapping into FlowConfig fields and initial-data specs.

    ``initial`` holds one {kind, params} entry; ``initials`` holds three entries
    ordered lower, middle, upper for a comparison run.
    """
    raw = dict(raw)
    if "initials" in raw:
        initials = list(raw.pop("initials"))
        if len(initials) != 3:
            raise ValueError("'initials' must list exactly three entries (lower, middle, upper)")
    elif "initial" in raw:
        initials = [raw.pop("initial")]
    else:
        raise ValueError("config needs 'initial' or 'initials'")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "checkpoints" in raw:
        raw["checkpoints"] = tuple(raw["checkpoints"])
    for init in initials:
        if "kind" not in init:
            raise ValueError("each initial entry needs a 'kind'")
        init.setdefault("params", {})
    return RunSpec(FlowConfig(**raw), initials)


def max_workers(default: int = 3) -> int:
    env = os.environ.get("KRS_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(default, os.cpu_count() or 1))


def build_initials(spec: RunSpec) -> list[RadialState]:
    cfg = spec.cfg
    base = build_profile(cfg.n, cfg.s_min, cfg.s_max, cfg.points)
    return [make_initial_perturbation(i["kind"], i["params"], cfg, base) for i in spec.initials]


def execute(spec: RunSpec) -> tuple[list[RadialState], list[FlowResult]]:
    initials = build_initials(spec)
    if len(initials) == 1:
        return initials, [run_flow(initials[0], spec.cfg)]
    with ThreadPoolExecutor(max_workers=max_workers(len(initials))) as pool:
        results = list(pool.map(lambda st: run_flow(st, spec.cfg), initials))
    return initials, results


def ordering_violation(results: list[FlowResult]) -> float:
    """Largest pointwise violation of lower <= middle <= upper over shared checkpoints."""
    times = set(results[0].checkpoints)
    for r in results[1:]:
        times &= set(r.checkpoints)
    worst = 0.0
    for t in sorted(times):
        lo, mid, up = (r.checkpoints[t].b for r in results)
        worst = max(worst, float(np.max(lo - mid)), float(np.max(mid - up)))
    return worst


def run_verdicts(kind: str, initial: RadialState, result: FlowResult) -> dict[str, bool]:
    s = result.series
    sup = s.column("sup")
    inf = s.column("inf")
    mag = np.maximum(np.abs(sup), np.abs(inf))
    scale0 = float(np.max(np.abs(initial.b)))
    out = {"completed": result.status == "ok"}
    if scale0 == 0.0:
        out["stationary"] = bool(np.all(mag <= STATIONARY_TOL))
        return out
    out["max principle"] = bool(np.all(mag <= scale0 * (1 + MAX_PRINCIPLE_REL)))
    if dg.is_monotone(initial.b):
        out["monotone preserved"] = bool(np.all(s.column("monotone")))
        out["osc monotone"] = dg.nonincreasing(s.column("osc"), abs_tol=OSC_REL * scale0)
    if kind in BARRIER_KINDS:
        out["lp monotone"] = dg.nonincreasing(s.column("lp"), rel_tol=LP_REL)
        r0, t0 = s.samples[0].radial_min, s.samples[0].tangential_min
        out["parabolicity margins"] = bool(
            np.all(s.column("radial_min") >= MARGIN_FRACTION * r0)
            and np.all(s.column("tangential_min") >= MARGIN_FRACTION * t0))
    return out


def summarize(initial: RadialState, result: FlowResult) -> dict:
    s = result.series
    first, last = s.samples[0], s.samples[-1]
    return {
        "initial": asdict(first),
        "final": asdict(last),
        "status": result.status,
        "reason": result.reason,
        "accepted_steps": result.accepted,
        "rejected_steps": result.rejected,
        # the truncated domain freezes b at s_max; that value is the run's floor
        "right_boundary_value": float(initial.b[-1]),
        "boundary_rate_max": float(np.max(np.abs(s.column("boundary_rate")))),
        "samples": len(s),
    }
