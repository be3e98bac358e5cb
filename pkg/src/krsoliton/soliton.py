"""Rotationally symmetric soliton profile phi(s), s = log|z|^2.

The profile solves ``phi**(n-1) * phi' * exp(phi) = exp(n*s)`` with
``phi -> 0`` as ``s -> -inf``.  Integrating once gives the implicit relation
``G(phi) = exp(n*s)`` with ``G(phi) = n * int_0^phi x**(n-1) e**x dx``, which is
what the root finder works with (in log space, in the variable log(phi)).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

__all__ = [
    "SolitonProfile",
    "SolverError",
    "implicit_lhs",
    "log_g",
    "solve_phi",
    "solve_phi_array",
    "phi_derivs",
    "build_profile",
    "asymptotic_phi",
    "write_profile_csv",
    "read_profile_csv",
    "MIN_FLOW_POINTS",
]

EPS = np.finfo(float).eps
# exp() overflows past this in binary64
MAX_EXP = 709.0
# below this log(phi) the profile underflows; s itself is roughly log(phi) there
MIN_LOG_PHI = -700.0
MIN_FLOW_POINTS = 5


class SolverError(RuntimeError):
    """Root finding for phi failed; ``s`` holds the offending abscissae."""

    def __init__(self, msg: str, s=None):
        super().__init__(msg)
        self.s = s


def _poly_coeffs(n: int) -> list[float]:
    # c_k = (-1)^(n-k-1) n!/k!, k = 0..n-1
    nf = math.factorial(n)
    return [(-1) ** (n - k - 1) * nf / math.factorial(k) for k in range(n)]


def _horner(coeffs, x):
    acc = np.zeros_like(x) + coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc * x + c
    return acc


def implicit_lhs(n: int, phi: float) -> float:
    """Left-hand side ``sum_k (-1)^(n-k-1) n!/k! phi^k e^phi`` of the implicit relation.

    Raises OverflowError when ``e^phi`` is not representable.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if phi < 0:
        raise ValueError("phi must be >= 0")
    if phi > MAX_EXP:
        raise OverflowError(f"e^phi not representable for phi={phi}")
    return float(math.exp(phi) * _horner(_poly_coeffs(n), np.float64(phi)))


def _switch(n: int) -> float:
    return max(30.0, 3.0 * n)


def log_g(n: int, phi):
    """log G(phi) with G(phi) = n int_0^phi x^(n-1) e^x dx, stable for all phi > 0.

    Small/moderate phi: positive series ``n phi^n sum_j phi^j / (j! (n+j))``.
    Large phi: ``phi + log(P(phi) - (-1)^(n-1) n! e^-phi)`` with P the Horner polynomial.
    """
    phi = np.asarray(phi, dtype=float)
    out = np.empty_like(phi)
    sw = _switch(n)
    small = phi <= sw
    if np.any(small):
        p = phi[small]
        term = np.ones_like(p)
        acc = term / n
        nterms = int(2.5 * sw + 60)
        for j in range(1, nterms):
            term = term * p / j
            acc = acc + term / (n + j)
        out[small] = math.log(n) + n * np.log(p) + np.log(acc)
    big = ~small
    if np.any(big):
        p = phi[big]
        poly = _horner(_poly_coeffs(n), p)
        c = (-1) ** (n - 1) * math.factorial(n)
        out[big] = p + np.log(poly - c * np.exp(-p))
    return out


def _bracket(n: int, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rigorous bracket for log(phi).

    phi^n <= G(phi) <= phi^n e^phi gives phi <= e^s and phi >= min(1, e^(s-1/n));
    G(phi) >= e^(phi-1) for phi >= 2 gives phi <= max(2, n s + 1), and feeding that
    back into the lower bound gives phi >= n s - n log(n s + 1) for large s.
    """
    ns = n * s
    hi = np.minimum(s, np.log(np.maximum(2.0, ns + 1.0)))
    lo = np.minimum(0.0, s - 1.0 / n)
    with np.errstate(invalid="ignore", divide="ignore"):
        alt = ns - n * np.log(np.where(ns > 0, ns + 1.0, 1.0))
        alt_log = np.where(alt > 1.0, np.log(np.where(alt > 1.0, alt, 1.0)), -np.inf)
    lo = np.maximum(lo, alt_log)
    return lo, hi


def solve_phi_array(n: int, s, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Vectorised solve of G(phi) = e^(n s); returns phi for every entry of ``s``.

    Bracketed bisection in x = log(phi), refined by Newton steps that are only
    accepted when they land strictly inside the current bracket.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if not np.all(np.isfinite(s)):
        raise SolverError("non-finite s", s[~np.isfinite(s)])
    if np.any(s < MIN_LOG_PHI):
        raise SolverError("phi underflows for s below %g" % MIN_LOG_PHI, s[s < MIN_LOG_PHI])

    ns = n * s
    lo, hi = _bracket(n, s)

    def h(x):
        return log_g(n, np.exp(x)) - ns

    hlo, hhi = h(lo), h(hi)
    bad = (hlo > 0) | (hhi < 0)
    if np.any(bad):
        raise SolverError("bracket does not enclose the root", s[bad])

    lead = ns - n * math.log(n) - (n - 1) * np.log(np.maximum(s, 1.0))
    x = np.clip(np.where(s < 0, s, np.log(np.maximum(lead, 1e-300))), lo, hi)
    x = np.where((x <= lo) | (x >= hi), 0.5 * (lo + hi), x)
    done = np.zeros(s.shape, dtype=bool)
    for _ in range(max_iter):
        hx = h(x)
        lo = np.where(hx <= 0, x, lo)
        hi = np.where(hx >= 0, x, hi)
        phi = np.exp(x)
        slope = np.exp(math.log(n) + n * x + phi - (hx + ns))
        newton = x - hx / slope
        inside = (newton > lo) & (newton < hi)
        x_new = np.where(inside, newton, 0.5 * (lo + hi))
        x_new = np.where(hx == 0, x, x_new)
        step = np.abs(x_new - x)
        x = np.where(done, x, x_new)
        done |= step <= 4 * EPS * np.maximum(1.0, np.abs(x))
        if np.all(done):
            break
    phi = np.exp(x)
    # log(phi) loses about |x| ulps of phi; polish in phi directly
    for _ in range(2):
        lg = log_g(n, phi)
        slope = np.exp(math.log(n) + (n - 1) * np.log(phi) + phi - lg)
        cand = phi - (lg - ns) / slope
        phi = np.where((cand > 0) & np.isfinite(cand), cand, phi)
    resid = np.abs(log_g(n, phi) - ns)
    # the target n*s itself carries rounding of order eps*|n s|
    allow = tol + 16 * EPS * np.abs(ns)
    failed = ~(resid <= allow)
    if np.any(failed):
        raise SolverError(
            "root finder did not reach tolerance (max residual %.3e)" % resid[failed].max(),
            s[failed],
        )
    return phi


def solve_phi(n: int, s: float, tol: float = 1e-12) -> float:
    """phi(s) for complex dimension ``n``; e.g. ``solve_phi(1, 0) == log 2``."""
    return float(solve_phi_array(n, np.array([s]), tol)[0])


def _log_pn(n: int, phi):
    """log of G(phi) e^-phi / (n phi^(n-1)), which tends to 0 as phi grows."""
    coeffs = _poly_coeffs(n)
    inv = 1.0 / phi
    # P(phi)/(n phi^(n-1)) as a polynomial in 1/phi, leading coefficient 1
    # accumulate everything but the leading 1 so the log1p keeps full precision
    rest = np.zeros_like(phi)
    for c in coeffs[:-1]:
        rest = (rest + c / n) * inv
    c0 = (-1) ** (n - 1) * math.factorial(n)
    return np.log1p(rest - c0 * np.exp(-phi - (n - 1) * np.log(phi)) / n)


def _large_gap(n: int, s, phi):
    """Refine z = phi - n s + log(n^n s^(n-1)) for large phi.

    Storing phi alone costs eps*n*s of absolute accuracy, which wipes out the
    second and third derivatives once s is in the thousands; z carries the
    same root with relative accuracy.
    """
    ns = n * s
    lam = n * math.log(n) + (n - 1) * np.log(s)
    z = phi - ns + lam
    for _ in range(4):
        y = z - lam
        ph = ns + y
        hz = z + (n - 1) * np.log1p(y / ns) + _log_pn(n, ph)
        # d/dz log G = G'/G, close to 1 here
        slope = np.exp(math.log(n) + (n - 1) * np.log(ph) + ph - log_g(n, ph))
        z = z - hz / slope
    return z, lam


def _derivs(n: int, s, phi):
    s = np.atleast_1d(np.asarray(s, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    d1 = np.exp(n * s - phi - (n - 1) * np.log(phi))
    gap = n - d1
    big = (phi > _switch(n)) & (s > 1.0)
    if n > 1 and np.any(big):
        sb = s[big]
        z, lam = _large_gap(n, sb, phi[big])
        y = z - lam
        gap[big] = -n * np.expm1(-z - (n - 1) * np.log1p(y / (n * sb)))
        d1[big] = n - gap[big]
        phi = phi.copy()
        phi[big] = n * sb + y
    q = d1 / phi
    ratio = gap - (n - 1) * q  # phi''/phi'
    d2 = d1 * ratio
    # same recursion as d2*(n - 2 d1 - 2(n-1)q) + (n-1) q^2 d1, regrouped
    d3 = d1 * ((n - 1) * q * q - n * ratio) + 2 * d2 * ratio
    return phi, d1, d2, d3


def phi_derivs(n: int, s, phi):
    """phi', phi'', phi''' from the ODE and its differentiated forms.

    For large phi the input is first polished against the implicit relation
    so the near-cancelling combinations in phi'' and phi''' stay accurate.
    """
    phi_arr = np.asarray(phi, dtype=float)
    if np.any(phi_arr <= 0):
        raise ValueError("phi must be positive")
    _, d1, d2, d3 = _derivs(n, s, phi_arr)
    if np.ndim(phi) == 0 and np.ndim(s) == 0:
        return float(d1[0]), float(d2[0]), float(d3[0])
    return d1, d2, d3


@dataclass(frozen=True)
class SolitonProfile:
    n: int
    grid: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    d3phi: np.ndarray
    tol: float = 1e-12
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def flow_ready(self) -> bool:
        return self.grid.size >= MIN_FLOW_POINTS

    def ode_residual(self) -> np.ndarray:
        """Pointwise |phi^(n-1) phi' e^phi - e^(ns)| / e^(ns), evaluated in log space."""
        logl = (self.n - 1) * np.log(self.phi) + np.log(self.dphi) + self.phi
        return np.abs(np.expm1(logl - self.n * self.grid))

    def implicit_residual(self) -> np.ndarray:
        return np.abs(np.expm1(log_g(self.n, self.phi) - self.n * self.grid))

    def check_invariants(self) -> dict[str, bool]:
        return {
            "phi_positive": bool(np.all(self.phi > 0)),
            "dphi_positive": bool(np.all(self.dphi > 0)),
            "phi_nondecreasing": bool(np.all(np.diff(self.phi) >= 0)),
            "ode_residual": bool(np.all(self.ode_residual() <= max(self.tol, 1e-10))),
        }

    def restrict(self, mask) -> "SolitonProfile":
        return SolitonProfile(self.n, self.grid[mask], self.phi[mask], self.dphi[mask],
                              self.d2phi[mask], self.d3phi[mask], self.tol, self.notes)


def profile_on_grid(n: int, grid, tol: float = 1e-12) -> SolitonProfile:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least 2 points")
    phi = solve_phi_array(n, grid, tol)
    d1, d2, d3 = phi_derivs(n, grid, phi)
    notes = () if grid.size >= MIN_FLOW_POINTS else ("insufficient points for flow use",)
    return SolitonProfile(n, grid, phi, d1, d2, d3, tol, notes)


def build_profile(n: int, s_min: float, s_max: float, points: int, tol: float = 1e-12) -> SolitonProfile:
    """Soliton profile on a uniform grid of ``points`` nodes over [s_min, s_max]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not s_min < s_max:
        raise ValueError("need s_min < s_max")
    if points < 2:
        raise ValueError("need at least 2 points")
    return profile_on_grid(n, np.linspace(s_min, s_max, points), tol)


def asymptotic_phi(n: int, s: float, order: Literal["leading", "full"] = "leading"):
    """Large-s expansion of (phi, phi', phi'', phi''').

    The logarithm appearing in the expansion is L = log(n^n s^(n-1)), fixed by
    ``e^(phi - n s) n (n s)^(n-1) -> 1``.  ``full`` keeps terms through o(s^-3).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not s > math.e:
        raise ValueError("expansion requires s > e")
    m = n - 1
    L = n * math.log(n) + m * math.log(s)
    if order == "leading":
        return (n * s - L, n - m / s, m / s**2, -2 * m / s**3)
    if order != "full":
        raise ValueError(f"unknown order {order!r}")
    ns = n * s
    phi = (ns - L + m * L / ns + m / ns
           + 0.5 * m * L**2 / ns**2 - m * (n - 2) * L / ns**2 - 0.5 * m * (3 * n - 5) / ns**2
           + m * L**3 / (3 * ns**3) - 0.5 * m * (3 * n - 5) * L**2 / ns**3
           + m * (n * n - 6 * n + 7) * L / ns**3
           + m * (11 * n * n - 46 * n + 47) / (6 * ns**3))
    d1 = (n - m / s - m * L / (n * s**2) + m * (n - 2) / (n * s**2)
          - m * L**2 / (n**2 * s**3) + m * (3 * n - 5) * L / (n**2 * s**3)
          - m * (n * n - 6 * n + 7) / (n**2 * s**3))
    d2 = m / s**2 + 2 * m * L / (n * s**3) - m * (3 * n - 5) / (n * s**3)
    d3 = -2 * m / s**3
    return (phi, d1, d2, d3)


def write_profile_csv(path, prof: SolitonProfile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "phi", "dphi", "d2phi", "d3phi"])
        for row in zip(prof.grid, prof.phi, prof.dphi, prof.d2phi, prof.d3phi):
            w.writerow([repr(float(v)) for v in row])


def read_profile_csv(path, n: int, tol: float = 1e-12) -> SolitonProfile:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SolitonProfile(n, data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4], tol)
