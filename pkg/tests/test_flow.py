import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from krsoliton.barrier import BarrierSpec, build_barrier
from krsoliton.flow import (FlowConfig, StepRejected, cfl_limit, cn_step, compact_bump,
                            flow_domain_for, make_initial_perturbation, radial_rhs, rk4_step,
                            run_flow, step, step_with_retry)
from krsoliton.soliton import build_profile
from krsoliton.state import ParabolicityError, RadialState, derivatives, tau_integral, write_state_csv

BASE = build_profile(2, -10.0, 60.0, 1401)
MILD = build_profile(2, 0.0, 30.0, 601)  # no stiff e^-s region, so RK4 runs at a usable dt


def bump_state(base, center=10.0, width=4.0, height=0.1, t=0.0):
    return RadialState.from_b(t, base, compact_bump(base.grid, center, width, height))


# ------------------------------------------------------------------ state helpers

def test_tau_integral_exact_and_limit():
    x = np.array([2.0, 2.0, 3.0])
    y = np.array([1.0, 1e-12, -1.5])
    got = tau_integral(x, y)
    assert got[0] == pytest.approx(np.log(1.5), rel=1e-15)
    assert got[1] == pytest.approx(0.5, rel=1e-12)
    assert got[2] == pytest.approx(np.log(0.5) / -1.5, rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(1e-3, 1e3), r=st.floats(-0.9, 5.0))
def test_tau_integral_against_quadrature(x, r):
    y = r * x
    tau = np.linspace(0, 1, 20001)
    ref = integrate.trapezoid(1.0 / (x + tau * y), tau)
    assert float(tau_integral(x, y)) == pytest.approx(ref, rel=1e-6)


def test_derivative_stencils_exact_on_quadratics():
    s = np.linspace(0, 1, 11)
    h = s[1] - s[0]
    b = 3 * s**2 - s + 2
    db, d2b = derivatives(b, h)
    assert np.allclose(db[1:], 6 * s[1:] - 1, atol=1e-12)
    assert np.allclose(d2b[1:], 6.0, atol=1e-9)
    assert db[0] == 0.0


# ------------------------------------------------------------------ right-hand side

def test_zero_is_stationary():
    st0 = RadialState.from_b(0.0, BASE, np.zeros(BASE.grid.size))
    assert not np.any(radial_rhs(st0))
    assert not np.any(cn_step(st0, 0.37).b)


def test_constant_is_stationary():
    st0 = RadialState.from_b(0.0, BASE, np.full(BASE.grid.size, 0.3))
    # exact in the interior; the one-sided end stencil leaves roundoff
    assert np.max(np.abs(radial_rhs(st0))) <= 1e-13


@settings(max_examples=100, deadline=None)
@given(center=st.floats(-5, 50), width=st.floats(1.0, 10.0), height=st.floats(-0.2, 0.2),
       slope=st.floats(-0.05, 0.05))
def test_rhs_divergence_form_identity(center, width, height, slope):
    b = compact_bump(BASE.grid, center, width, height) + slope * np.tanh(BASE.grid / 10)
    state = RadialState.from_b(0.0, BASE, b)
    try:
        state.check_parabolic()
    except ParabolicityError:
        return
    f = radial_rhs(state)
    a_r, a_t = state.coefficients()
    g = a_r * state.d2b + (state.n - 1) * a_t * state.db + state.db
    assert np.all(np.abs(f - g) <= 1e-12 * (1 + np.abs(f)))


def test_linearization_richardson():
    f = compact_bump(BASE.grid, 5.0, 4.0, 1.0)
    lin_state = RadialState.from_b(0.0, BASE, f)
    lin = lin_state.d2b / BASE.dphi + (BASE.n - 1) * lin_state.db / BASE.phi + lin_state.db
    errs = []
    quot = []
    for eps in (1e-6, 5e-7):
        q = radial_rhs(RadialState.from_b(0.0, BASE, eps * f)) / eps
        quot.append(q)
        errs.append(np.max(np.abs(q - lin)))
    # first-order error in eps halves; the extrapolated quotient is far closer
    assert 1.5 < errs[0] / errs[1] < 2.5
    extrap = 2 * quot[1] - quot[0]
    assert np.max(np.abs(extrap - lin)) < 1e-2 * errs[1]


# ------------------------------------------------------------------ steppers

def test_cn_and_rk4_agree_over_one_step():
    state = bump_state(MILD)
    diffs = []
    for dt in (4e-4, 2e-4):
        assert dt <= cfl_limit(state, 0.5)
        diffs.append(np.max(np.abs(cn_step(state, dt).b - rk4_step(state, dt).b)))
    assert diffs[0] < 1e-9
    # both schemes are at least second order over a step, so the gap shrinks at least 4x
    assert diffs[0] / diffs[1] > 4.0


def test_cn_step_second_order_in_time():
    state = bump_state(MILD)
    ref = state
    for _ in range(64):
        ref = cn_step(ref, 0.1 / 64)
    errs = []
    for k in (4, 8):
        s = state
        for _ in range(k):
            s = cn_step(s, 0.1 / k)
        errs.append(np.max(np.abs(s.b - ref.b)))
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_rk4_rejects_above_cfl():
    state = bump_state(MILD)
    limit = cfl_limit(state, 0.5)
    with pytest.raises(StepRejected):
        rk4_step(state, 2 * limit)
    cfg = FlowConfig(n=2, s_min=0.0, s_max=30.0, points=601, stepper="explicit_rk4", adaptive=False)
    new, used, rejections = step_with_retry(state, 8 * limit, cfg)
    assert rejections >= 3 and used <= limit
    assert new.t == pytest.approx(used)


def test_step_rejects_loss_of_parabolicity():
    # a steep negative dip drives phi' + b'' below zero after a large explicit step
    state = bump_state(MILD, center=15.0, width=0.5, height=-0.02)
    cfg = FlowConfig(n=2, s_min=0.0, s_max=30.0, points=601, stepper="explicit_rk4", c_cfl=1e6)
    with pytest.raises(StepRejected):
        step(state, 5.0, cfg)


def test_step_requires_positive_dt():
    with pytest.raises(ValueError):
        step(bump_state(MILD), 0.0, FlowConfig())


# ------------------------------------------------------------------ config and initial data

@pytest.mark.parametrize("kwargs", [dict(points=4), dict(s_min=5.0, s_max=1.0), dict(stepper="euler"),
                                    dict(bc_left="dirichlet"), dict(dt=0.0), dict(p=1.0),
                                    dict(alpha=0.5, p=4.0), dict(diag_every=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        FlowConfig(**kwargs)


def test_config_grid():
    cfg = FlowConfig()
    assert cfg.grid().size == 1401 and cfg.h == pytest.approx(0.05)


def test_zero_height_bump_is_zero_state():
    st0 = make_initial_perturbation("compact_bump", {"center": 3, "width": 2, "height": 0.0}, FlowConfig(), BASE)
    assert not np.any(st0.b)


def test_bump_is_compact_and_c2():
    g = np.linspace(-1, 11, 12001)
    b = compact_bump(g, 5.0, 3.0, 0.7)
    assert b.max() == pytest.approx(0.7) and not np.any(b[np.abs(g - 5) >= 3])
    d2 = np.diff(b, 2) / (g[1] - g[0]) ** 2
    assert np.max(np.abs(np.diff(d2))) < 1e-2  # second derivative has no jumps


def test_upper_barrier_initial_data():
    cfg = FlowConfig()
    st0 = make_initial_perturbation("barrier_upper", {"K": 0.1, "alpha": 0.5, "R": 2.546875}, cfg, BASE)
    assert np.all(np.diff(st0.b) <= 0)
    left = BASE.grid <= 2.546875
    assert np.all(st0.b[left] == st0.b[0])


def test_barrier_initial_data_matches_barrier_module():
    spec = BarrierSpec(0.1, 0.5, 3.0, "lower")
    cfg = FlowConfig()
    st0 = make_initial_perturbation("barrier_lower", {"K": 0.1, "alpha": 0.5, "R": 3.0}, cfg, BASE)
    pos = BASE.grid > 0
    bp = build_barrier(BASE.restrict(pos), spec)
    assert np.array_equal(st0.b[pos], bp.bhat)


def test_from_file_round_trip(tmp_path):
    src = bump_state(BASE, height=0.0123456789)
    path = tmp_path / "state.csv"
    write_state_csv(path, src)
    back = make_initial_perturbation("from_file", {"path": str(path)}, FlowConfig(), BASE)
    assert np.array_equal(back.b, src.b)


def test_from_file_grid_mismatch(tmp_path):
    path = tmp_path / "state.csv"
    write_state_csv(path, bump_state(MILD))
    with pytest.raises(ValueError):
        make_initial_perturbation("from_file", {"path": str(path)}, FlowConfig(), BASE)


def test_non_parabolic_initial_data_rejected():
    with pytest.raises(ParabolicityError):
        make_initial_perturbation("compact_bump", {"center": -5, "width": 0.3, "height": -1.0},
                                  FlowConfig(), BASE)


def test_decay_bound_enforced():
    params = {"center": 10.0, "width": 3.0, "height": 0.2, "decay_K": 0.1, "decay_alpha": 0.5}
    with pytest.raises(ValueError, match="decay"):
        make_initial_perturbation("compact_bump", params, FlowConfig(), BASE)


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_initial_perturbation("sawtooth", {}, FlowConfig(), BASE)


def test_flow_domain_for():
    assert flow_domain_for(2.5) == (-10.0, 60.0, 1401)
    lo, hi, pts = flow_domain_for(10.0)
    assert hi == 80.0 and (hi - lo) / (pts - 1) <= 0.05


# ------------------------------------------------------------------ run_flow

def test_run_flow_zero_fixed_dt():
    cfg = FlowConfig(adaptive=False, checkpoints=(0.0, 0.5))
    st0 = make_initial_perturbation("zero", {}, cfg, BASE)
    res = run_flow(st0, cfg)
    assert res.status == "ok" and res.accepted == 100
    assert np.all(res.series.column("sup") == 0)
    assert sorted(res.checkpoints) == [0.0, 0.5, 1.0]
    assert res.final.t == 1.0


def test_run_flow_sampling_and_sink():
    cfg = FlowConfig(t_end=0.2, adaptive=False, diag_every=5, checkpoints=(0.07,))
    seen = []
    res = run_flow(bump_state(BASE), cfg, sink=seen.append)
    t = res.series.column("t")
    assert t[0] == 0.0 and t[-1] == pytest.approx(0.2)
    assert np.any(np.isclose(t, 0.07))
    assert len(seen) == len(res.series)
    assert np.all(np.diff(t) > 0)


def test_run_flow_adaptive_hits_checkpoints():
    cfg = FlowConfig(t_end=2.0, checkpoints=(0.3, 1.1))
    res = run_flow(bump_state(BASE), cfg)
    assert res.status == "ok"
    assert set(res.checkpoints) == {0.3, 1.1, 2.0}
    assert res.checkpoints[1.1].t == 1.1


def test_run_flow_abort_is_recorded():
    cfg = FlowConfig(n=2, s_min=0.0, s_max=30.0, points=601, stepper="explicit_rk4",
                     adaptive=False, max_halvings=1, dt=1.0, t_end=1.0)
    res = run_flow(bump_state(MILD), cfg)
    assert res.status == "aborted" and "halvings" in res.reason
    assert len(res.series) == 1


def test_run_flow_is_deterministic():
    cfg = FlowConfig(t_end=0.5)
    a = run_flow(bump_state(BASE), cfg)
    b = run_flow(bump_state(BASE), cfg)
    assert np.array_equal(a.final.b, b.final.b)
    assert a.series.to_records() == b.series.to_records()
