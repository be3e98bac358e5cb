"""Decaying barriers around the soliton and grid certification of their curvature conditions."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate

from .soliton import SolitonProfile, profile_on_grid

Side = Literal["upper", "lower"]

INEQUALITY_NAMES = (
    "phib",                 # phi_b > 0
    "dphib",                # phi_b' > 0
    "phib_minus_dphib",     # phi_b - phi_b' > 0
    "dphib2_minus_phib_d2phib",     # phi_b'^2 - phi_b phi_b'' > 0
    "d2phib2_minus_dphib_d3phib",   # phi_b''^2 - phi_b' phi_b''' > 0
)

# below this distance from the cutoff band edges every derivative of psi underflows
_PSI_EDGE = 2e-3
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class SearchError(RuntimeError):
    def __init__(self, msg: str, last_report: "CertificationReport | None" = None):
        super().__init__(msg)
        self.last_report = last_report


def cutoff_psi(x):
    """Smooth monotone step: 0 for x <= 1, 1 for x >= 2, with three derivatives.

    psi(x) = g(x-1) / (g(x-1) + g(2-x)), g(t) = exp(-1/t).  Written as a logistic
    of u = 1/(2-x) - 1/(x-1), so the derivatives follow from the chain rule.
    """
    x = np.asarray(x, dtype=float)
    psi = np.where(x >= 1.5, 1.0, 0.0)
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    d3 = np.zeros_like(x)
    band = (x > 1 + _PSI_EDGE) & (x < 2 - _PSI_EDGE)
    if np.any(band):
        a = x[band] - 1.0
        b = 2.0 - x[band]
        u = 1.0 / b - 1.0 / a
        u1 = 1.0 / b**2 + 1.0 / a**2
        u2 = 2.0 / b**3 - 2.0 / a**3
        u3 = 6.0 / b**4 + 6.0 / a**4
        sig = 0.5 * (1.0 + np.tanh(0.5 * u))
        s1 = sig * (1.0 - sig)
        s2 = s1 * (1.0 - 2.0 * sig)
        s3 = s1 * (1.0 - 2.0 * sig) ** 2 - 2.0 * s1**2
        psi[band] = sig
        d1[band] = s1 * u1
        d2[band] = s2 * u1**2 + s1 * u2
        d3[band] = s3 * u1**3 + 3.0 * s2 * u1 * u2 + s1 * u3
    # outside the resolved band psi is 0 or 1 to within underflow
    psi = np.where(x <= 1.0, 0.0, np.where(x >= 2.0, 1.0, psi))
    edge = ~band & (x > 1.0) & (x < 2.0)
    psi = np.where(edge, np.where(x < 1.5, 0.0, 1.0), psi)
    if psi.ndim == 0:
        return float(psi), float(d1), float(d2), float(d3)
    return psi, d1, d2, d3


@dataclass(frozen=True)
class BarrierSpec:
    K: float
    alpha: float
    R: float
    side: Side = "upper"
    n: int = 2

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("barriers are only constructed for n >= 2 (the n = 1 soliton admits none)")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.R < 0.5:
            raise ValueError("R must be >= 1/2")
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if self.side not in ("upper", "lower"):
            raise ValueError(f"side must be 'upper' or 'lower', got {self.side!r}")

    @property
    def sign(self) -> float:
        # upper barrier subtracts from phi
        return -1.0 if self.side == "upper" else 1.0

    @property
    def amplitude(self) -> float:
        return self.K * self.alpha * (2.0 * self.R) ** self.alpha


def _integrand(spec: BarrierSpec, sigma):
    psi = cutoff_psi(np.asarray(sigma) / spec.R)[0]
    return spec.amplitude * np.asarray(sigma) ** (-1.0 - spec.alpha) * psi


def barrier_perturbation(spec: BarrierSpec, s: float, quad_tol: float = 1e-12) -> float:
    """Signed potential-level perturbation +-int_s^inf K a (2R)^a sigma^(-1-a) psi(sigma/R).

    Adaptive quadrature over the cutoff band plus the exact tail from 2R.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    two_r = 2.0 * spec.R
    s_star = max(s, two_r)
    val = spec.K * two_r**spec.alpha * s_star ** (-spec.alpha)
    lo = max(s, spec.R)
    if lo < two_r:
        part, err = integrate.quad(lambda x: float(_integrand(spec, x)), lo, two_r,
                                   epsabs=quad_tol, epsrel=0.0, limit=200)
        if not err <= quad_tol:
            raise RuntimeError(f"quadrature did not converge (error estimate {err:.3e})")
        val += part
    return -spec.sign * val


def _perturbation_on_grid(spec: BarrierSpec, grid: np.ndarray) -> np.ndarray:
    """Same quantity as barrier_perturbation on a whole grid, via cumulative Gauss-Legendre."""
    R, two_r = spec.R, 2.0 * spec.R
    out = spec.K * two_r**spec.alpha * np.maximum(grid, two_r) ** (-spec.alpha)
    inband = (grid < two_r)
    if spec.K > 0 and np.any(inband):
        pts = np.unique(np.concatenate([[R, two_r], grid[(grid > R) & (grid < two_r)]]))
        a, b = pts[:-1], pts[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        seg = half * (_integrand(spec, nodes) @ _GL_WEIGHTS)
        # integral from pts[i] to 2R
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        idx = np.searchsorted(pts, np.clip(grid, R, two_r))
        out = out + np.where(inband, tail[np.minimum(idx, len(pts) - 1)], 0.0)
    return -spec.sign * out


@dataclass(frozen=True)
class BarrierProfile:
    spec: BarrierSpec
    base: SolitonProfile
    phib: np.ndarray
    dphib: np.ndarray
    d2phib: np.ndarray
    d3phib: np.ndarray
    bhat: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return self.base.grid


def build_barrier(base: SolitonProfile, spec: BarrierSpec) -> BarrierProfile:
    """phi_b and its derivatives by differentiating the ansatz term by term."""
    if base.n != spec.n:
        raise ValueError(f"dimension mismatch: profile n={base.n}, spec n={spec.n}")
    s = base.grid
    a, R = spec.alpha, spec.R
    c = spec.sign * spec.amplitude
    active = s > R
    f0 = np.zeros_like(s)
    f1 = np.zeros_like(s)
    f2 = np.zeros_like(s)
    f3 = np.zeros_like(s)
    if spec.K > 0 and np.any(active):
        sa = s[active]
        p0, p1, p2, p3 = cutoff_psi(sa / R)
        w1 = sa ** (-1 - a)
        w2 = sa ** (-2 - a)
        w3 = sa ** (-3 - a)
        w4 = sa ** (-4 - a)
        f0[active] = w1 * p0
        f1[active] = -(1 + a) * w2 * p0 + w1 * p1 / R
        f2[active] = ((1 + a) * (2 + a) * w3 * p0 - 2 * (1 + a) * w2 * p1 / R
                      + w1 * p2 / R**2)
        f3[active] = (-(1 + a) * (2 + a) * (3 + a) * w4 * p0
                      + 3 * (1 + a) * (2 + a) * w3 * p1 / R
                      - 3 * (1 + a) * w2 * p2 / R**2
                      + w1 * p3 / R**3)
    bhat = _perturbation_on_grid(spec, s) if spec.K > 0 else np.zeros_like(s)
    return BarrierProfile(
        spec, base,
        base.phi + c * f0, base.dphi + c * f1, base.d2phi + c * f2, base.d3phi + c * f3,
        bhat,
    )


@dataclass
class Margin:
    name: str
    min: float
    s_at_min: float


@dataclass
class CertificationReport:
    certified: bool
    margins: list[Margin]
    spec: BarrierSpec
    equivalence: dict[str, float] = field(default_factory=dict)
    guard_ok: bool = True

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "margins": [asdict(m) for m in self.margins],
            "spec": asdict(self.spec),
            "equivalence": dict(self.equivalence),
            "guard_ok": self.guard_ok,
        }

    def margin(self, name: str) -> Margin:
        return next(m for m in self.margins if m.name == name)


def inequality_values(bp: BarrierProfile) -> dict[str, np.ndarray]:
    p, d1, d2, d3 = bp.phib, bp.dphib, bp.d2phib, bp.d3phib
    vals = (p, d1, p - d1, d1 * d1 - p * d2, d2 * d2 - d1 * d3)
    return dict(zip(INEQUALITY_NAMES, vals))


def certify_barrier(bp: BarrierProfile) -> CertificationReport:
    """Evaluate the five positivity conditions at every grid point."""
    s = bp.grid
    margins = []
    for name, v in inequality_values(bp).items():
        i = int(np.argmin(v))
        margins.append(Margin(name, float(v[i]), float(s[i])))
    base = bp.base
    rr = bp.dphib / base.dphi
    tt = bp.phib / base.phi
    equivalence = {
        "rr_min": float(rr.min()), "rr_max": float(rr.max()),
        "tt_min": float(tt.min()), "tt_max": float(tt.max()),
        "delta": float(max(abs(rr.min() - 1), abs(rr.max() - 1), abs(tt.min() - 1), abs(tt.max() - 1))),
    }
    guard_ok = True
    if bp.spec.side == "lower":
        guard_ok = bool(np.all(bp.phib - base.phi * 1e-6 > 0))
    certified = all(m.min > 0 for m in margins)
    return CertificationReport(certified, margins, bp.spec, equivalence, guard_ok)


def certification_grid(R: float, s_min: float = 0.1, s_max: float | None = None) -> np.ndarray:
    """Uniform grid on [s_min, max(s_max, 8R)] fine enough to resolve the cutoff band."""
    top = 8.0 * R if s_max is None else max(s_max, 8.0 * R)
    h = min(0.05, 0.01 * R)
    points = int(math.ceil((top - s_min) / h)) + 1
    return np.linspace(s_min, top, points)


def certify_spec(spec: BarrierSpec, s_min: float = 0.1, s_max: float | None = None,
                 tol: float = 1e-12) -> tuple[BarrierProfile, CertificationReport]:
    base = profile_on_grid(spec.n, certification_grid(spec.R, s_min, s_max), tol)
    bp = build_barrier(base, spec)
    return bp, certify_barrier(bp)


def find_admissible_R(n: int, K: float, alpha: float, side: Side = "upper",
                      R_max: float = 1024.0, s_min: float = 0.1,
                      rel_tol: float = 0.01) -> tuple[float, CertificationReport]:
    """Smallest R on the ladder 1/2, 1, 2, 4, ... that certifies, refined by bisection.

    Each candidate is certified on its own grid over [s_min, 8R].  Returns the
    admissible R and its report; raises SearchError when R_max is exhausted.
    """
    if R_max < 0.5:
        raise ValueError("R_max must be >= 1/2")

    def ok(R):
        rep = certify_spec(BarrierSpec(K, alpha, R, side, n), s_min)[1]
        return rep.certified and rep.guard_ok, rep

    prev = None
    R = 0.5
    last = None
    while R <= R_max:
        good, rep = ok(R)
        last = rep
        if good:
            break
        prev = R
        R *= 2.0
    else:
        raise SearchError(f"no admissible R <= {R_max}", last)
    if prev is None:
        return R, rep
    lo, hi, hi_rep = prev, R, rep
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        good, rep = ok(mid)
        if good:
            hi, hi_rep = mid, rep
        else:
            lo = mid
    return hi, hi_rep


def check_initial_decay(u, grid, K: float, alpha: float) -> bool:
    """|u| <= K min(1, s^-alpha) where s > 0 and |u| <= K elsewhere."""
    u = np.abs(np.asarray(u, dtype=float))
    s = np.asarray(grid, dtype=float)
    bound = np.where(s > 0, K * np.minimum(1.0, np.where(s > 0, s, 1.0) ** (-alpha)), K)
    return bool(np.all(u <= bound))


def write_barrier_csv(path, bp: BarrierProfile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "phib", "dphib", "d2phib", "d3phib", "bhat"])
        for row in zip(bp.grid, bp.phib, bp.dphib, bp.d2phib, bp.d3phib, bp.bhat):
            w.writerow([repr(float(v)) for v in row])
