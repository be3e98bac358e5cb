"""Normalized radial Kahler-Ricci flow for a perturbation b(s, t) of the soliton potential.

    b_t = log((phi' + b'')/phi') + (n-1) log((phi + b')/phi) + b'
        = A_r b'' + ((n-1) A_t + 1) b'

with A_r, A_t the tau-averaged inverse eigenvalues.  The second form is what the
implicit stepper linearises: coefficients are frozen, the tridiagonal system is
solved, then the coefficients are re-frozen at the midpoint and solved again.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np
from scipy.linalg import solve_banded

from . import diagnostics as dg
from .barrier import BarrierSpec, _perturbation_on_grid, check_initial_decay, find_admissible_R
from .soliton import SolitonProfile, build_profile
from .state import ParabolicityError, RadialState, read_state_csv

log = logging.getLogger(__name__)

Stepper = Literal["explicit_rk4", "crank_nicolson"]


class StepRejected(RuntimeError):
    pass


class FlowAbort(RuntimeError):
    pass


@dataclass
class FlowConfig:
    n: int = 2
    s_min: float = -10.0
    s_max: float = 60.0
    points: int = 1401
    t_end: float = 1.0
    dt: float = 0.01
    stepper: Stepper = "crank_nicolson"
    bc_left: str = "neumann_zero"
    bc_right: str = "dirichlet_frozen"
    diag_every: int = 1
    p: float = 8.0
    checkpoints: tuple[float, ...] = ()
    adaptive: bool = True
    # step-doubling error bound, relative to max|b(0)|
    tol_local: float = 1e-6
    dt_min: float = 1e-10
    dt_max: float = 1.0
    c_cfl: float = 0.5
    max_halvings: int = 20
    picard: int = 1
    grow_after: int = 10
    grow_factor: float = 1.25
    alpha: float | None = None

    def __post_init__(self):
        if not self.s_max > self.s_min:
            raise ValueError("need s_max > s_min")
        if self.points < 5:
            raise ValueError("need at least 5 grid points")
        if self.stepper not in ("explicit_rk4", "crank_nicolson"):
            raise ValueError(f"unknown stepper {self.stepper!r}")
        if self.bc_left != "neumann_zero" or self.bc_right != "dirichlet_frozen":
            raise ValueError("only neumann_zero (left) and dirichlet_frozen (right) are supported")
        if self.dt <= 0 or self.t_end < 0:
            raise ValueError("need dt > 0 and t_end >= 0")
        if self.diag_every < 1:
            raise ValueError("diag_every must be >= 1")
        if self.p < 2:
            raise ValueError("p must be >= 2")
        self.checkpoints = tuple(sorted(float(c) for c in self.checkpoints))
        if self.alpha is not None and not self.p * self.alpha > self.n + 1:
            raise ValueError(f"need p*alpha > n+1 for a finite I_p (p={self.p}, alpha={self.alpha})")

    @property
    def h(self) -> float:
        return (self.s_max - self.s_min) / (self.points - 1)

    def grid(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.points)


def radial_rhs(state: RadialState) -> np.ndarray:
    """Pointwise F[b]; raises ParabolicityError where a log argument is not positive."""
    state.check_parabolic()
    base = state.base
    return (np.log1p(state.d2b / base.dphi)
            + (state.n - 1) * np.log1p(state.db / base.phi)
            + state.db)


def _rate(state: RadialState) -> np.ndarray:
    f = radial_rhs(state)
    f[-1] = 0.0  # frozen Dirichlet node
    return f


def _operator_bands(a_r, drift, h):
    """Banded (lower, diag, upper) of L b = a_r b'' + drift b' with the boundary closures."""
    lower = np.empty_like(a_r)
    diag = np.empty_like(a_r)
    upper = np.empty_like(a_r)
    lower[:] = a_r / h**2 - drift / (2 * h)
    diag[:] = -2 * a_r / h**2
    upper[:] = a_r / h**2 + drift / (2 * h)
    # reflected ghost node: b_{-1} = b_1
    upper[0] = 2 * a_r[0] / h**2
    lower[0] = 0.0
    # Dirichlet row carries no dynamics
    lower[-1] = diag[-1] = upper[-1] = 0.0
    return lower, diag, upper


def _apply(lower, diag, upper, b):
    out = diag * b
    out[1:] += lower[1:] * b[:-1]
    out[:-1] += upper[:-1] * b[1:]
    return out


def _cn_solve(b_old, lower, diag, upper, dt):
    rhs = b_old + 0.5 * dt * _apply(lower, diag, upper, b_old)
    ab = np.zeros((3, b_old.size))
    ab[0, 1:] = -0.5 * dt * upper[:-1]
    ab[1, :] = 1.0 - 0.5 * dt * diag
    ab[2, :-1] = -0.5 * dt * lower[1:]
    return solve_banded((1, 1), ab, rhs, overwrite_ab=True, overwrite_b=True,
                        check_finite=False)


def _coefficient_bands(state: RadialState):
    state.check_parabolic()
    a_r, a_t = state.coefficients()
    drift = (state.n - 1) * a_t + 1.0
    return _operator_bands(a_r, drift, state.base.h)


def cn_step(state: RadialState, dt: float, picard: int = 1) -> RadialState:
    base = state.base
    b_new = _cn_solve(state.b, *_coefficient_bands(state), dt)
    for _ in range(picard):
        mid = RadialState.from_b(state.t + 0.5 * dt, base, 0.5 * (state.b + b_new))
        b_new = _cn_solve(state.b, *_coefficient_bands(mid), dt)
    return RadialState.from_b(state.t + dt, base, b_new)


def cfl_limit(state: RadialState, c_cfl: float) -> float:
    a_r, _ = state.coefficients()
    return c_cfl * state.base.h**2 / float(np.max(a_r))


def rk4_step(state: RadialState, dt: float, c_cfl: float = 0.5) -> RadialState:
    limit = cfl_limit(state, c_cfl)
    if dt > limit:
        raise StepRejected(f"dt={dt:.3e} exceeds explicit stability bound {limit:.3e}")
    base, t, b = state.base, state.t, state.b

    def at(bb, tt):
        return RadialState.from_b(tt, base, bb)

    k1 = _rate(state)
    k2 = _rate(at(b + 0.5 * dt * k1, t + 0.5 * dt))
    k3 = _rate(at(b + 0.5 * dt * k2, t + 0.5 * dt))
    k4 = _rate(at(b + dt * k3, t + dt))
    return at(b + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), t + dt)


def step(state: RadialState, dt: float, cfg: FlowConfig) -> RadialState:
    """One step of the configured scheme; raises StepRejected on a parabolicity
    violation or an explicit-stability breach."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    try:
        if cfg.stepper == "crank_nicolson":
            new = cn_step(state, dt, cfg.picard)
        else:
            new = rk4_step(state, dt, cfg.c_cfl)
        if not np.all(np.isfinite(new.b)):
            raise StepRejected("non-finite values after step")
        new.check_parabolic()
    except ParabolicityError as exc:
        raise StepRejected(str(exc)) from exc
    return new


def step_with_retry(state: RadialState, dt: float, cfg: FlowConfig) -> tuple[RadialState, float, int]:
    """Halve dt until the step is accepted; returns (new state, dt used, rejections)."""
    for k in range(cfg.max_halvings + 1):
        try:
            return step(state, dt, cfg), dt, k
        except StepRejected as exc:
            log.debug("t=%.6g: step rejected (%s), halving dt", state.t, exc)
            dt *= 0.5
    raise FlowAbort(f"step failed after {cfg.max_halvings} halvings at t={state.t:.6g}")


@dataclass
class FlowResult:
    series: dg.DiagnosticsSeries
    final: RadialState
    checkpoints: dict[float, RadialState] = field(default_factory=dict)
    status: str = "ok"
    reason: str = ""
    accepted: int = 0
    rejected: int = 0


def run_flow(initial: RadialState, cfg: FlowConfig,
             sink: Callable[[dg.Sample], None] | None = None) -> FlowResult:
    """Integrate to cfg.t_end, sampling diagnostics every cfg.diag_every accepted steps,
    at every checkpoint and at the end."""
    state = initial
    series = dg.DiagnosticsSeries()

    def emit(st):
        smp = dg.sample(st, cfg.p)
        series.append(smp)
        if sink is not None:
            sink(smp)

    emit(state)
    result = FlowResult(series, state)
    stops = sorted({c for c in cfg.checkpoints if 0 < c < cfg.t_end} | {cfg.t_end})
    if 0.0 in cfg.checkpoints:
        result.checkpoints[0.0] = state
    scale = max(float(np.max(np.abs(initial.b))), 1e-300)
    dt = min(cfg.dt, cfg.dt_max)
    streak = 0
    since_diag = 0
    stop_i = 0
    while stop_i < len(stops):
        target = stops[stop_i]
        remaining = target - state.t
        if remaining <= 1e-12 * max(1.0, abs(target)):
            stop_i += 1
            continue
        hit = dt >= remaining * (1 - 1e-12)
        trial = remaining if hit else dt
        try:
            if cfg.adaptive:
                new, used, nrej = _adaptive_step(state, trial, cfg, scale)
            else:
                new, used, nrej = step_with_retry(state, trial, cfg)
        except FlowAbort as exc:
            result.status, result.reason = "aborted", str(exc)
            break
        result.rejected += nrej
        result.accepted += 1
        if used < trial:
            hit = False
            dt = used
            streak = 0
        else:
            streak += 1
        if hit:
            new = replace(new, t=target)
        state = new
        since_diag += 1
        if cfg.adaptive and streak >= cfg.grow_after:
            dt = min(dt * cfg.grow_factor, cfg.dt_max)
            streak = 0
        at_stop = hit
        if at_stop:
            if target in cfg.checkpoints or target == cfg.t_end:
                result.checkpoints[target] = state
            stop_i += 1
        if since_diag >= cfg.diag_every or at_stop:
            emit(state)
            since_diag = 0
    result.final = state
    return result


def _adaptive_step(state: RadialState, dt: float, cfg: FlowConfig, scale: float):
    """Step doubling: accept the two-half-step result when it agrees with the full step."""
    rejections = 0
    for _ in range(cfg.max_halvings + 1):
        try:
            full = step(state, dt, cfg)
            half = step(step(state, 0.5 * dt, cfg), 0.5 * dt, cfg)
        except StepRejected:
            rejections += 1
            dt *= 0.5
            continue
        err = float(np.max(np.abs(full.b - half.b))) / (cfg.tol_local * scale)
        if err <= 1.0 or dt <= cfg.dt_min:
            return half, dt, rejections
        rejections += 1
        dt *= 0.5
    raise FlowAbort(f"step failed after {cfg.max_halvings} halvings at t={state.t:.6g}")


# ---------------------------------------------------------------- initial data

def smootherstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (x * (6 * x - 15) + 10)


def compact_bump(grid, center: float, width: float, height: float) -> np.ndarray:
    """C^2 bump of the given height supported on [center - width, center + width]."""
    return height * smootherstep(1.0 - np.abs(np.asarray(grid) - center) / width)


def make_initial_perturbation(kind: str, params: dict, cfg: FlowConfig,
                              base: SolitonProfile | None = None) -> RadialState:
    """Initial RadialState of the given kind on the configuration grid."""
    if base is None:
        base = build_profile(cfg.n, cfg.s_min, cfg.s_max, cfg.points)
    grid = base.grid
    if kind in ("barrier_upper", "barrier_lower"):
        side = "upper" if kind == "barrier_upper" else "lower"
        K, alpha = float(params["K"]), float(params["alpha"])
        R = params.get("R")
        if R is None or params.get("find_R"):
            R, _ = find_admissible_R(cfg.n, K, alpha, side, float(params.get("R_max", 1024.0)))
        spec = BarrierSpec(K, alpha, float(R), side, cfg.n)
        b = _perturbation_on_grid(spec, grid)
    elif kind == "compact_bump":
        b = compact_bump(grid, float(params["center"]), float(params["width"]),
                         float(params["height"]))
    elif kind == "zero":
        b = np.zeros_like(grid)
    elif kind == "from_file":
        s, b = read_state_csv(params["path"])
        if s.shape != grid.shape or not np.allclose(s, grid, rtol=0, atol=1e-12 * max(1.0, abs(grid).max())):
            raise ValueError("snapshot grid does not match the configured grid")
    else:
        raise ValueError(f"unknown initial kind {kind!r}")
    state = RadialState.from_b(0.0, base, b)
    state.check_parabolic()
    if "decay_K" in params:
        if not check_initial_decay(b, grid, float(params["decay_K"]), float(params["decay_alpha"])):
            raise ValueError("initial perturbation violates the decay bound")
    return state


def barrier_R(n: int, K: float, alpha: float, side: str = "upper") -> float:
    return find_admissible_R(n, K, alpha, side)[0]


def flow_domain_for(R: float, s_min: float = -10.0, s_max: float = 60.0, h: float = 0.05):
    """(s_min, s_max, points) covering [s_min, max(s_max, 8R)] at spacing <= h."""
    top = max(s_max, 8.0 * R)
    points = int(math.ceil((top - s_min) / h)) + 1
    return s_min, top, points
