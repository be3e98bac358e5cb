"""Convergence functionals evaluated on radial states."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .state import RadialState

CSV_FIELDS = ("t", "sup", "inf", "osc", "lp", "eq_rr_min", "eq_rr_max",
              "eq_tt_min", "eq_tt_max", "monotone", "sign_changes")

# crossings and monotonicity ignore differences below this fraction of max|b|
DEAD_BAND = 1e-12


def oscillation(state: RadialState) -> tuple[float, float, float]:
    hi = float(state.b.max())
    lo = float(state.b.min())
    return hi, lo, hi - lo


def lp_quantity(state: RadialState, p: float) -> float:
    """Radial form of int |b|^p det(a): int |b|^p A_r^-1 A_t^-(n-1) ds (composite Simpson).

    det(a) = |z|^-2n / (A_r A_t^(n-1)) for the interpolated metric and the Lebesgue
    volume is (1/2) e^(ns) ds per unit sphere measure; the |z| powers cancel and the
    overall constant is dropped.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    if not np.any(state.b):
        return 0.0
    state.check_parabolic()
    a_r, a_t = state.coefficients()
    weight = 1.0 / (a_r * a_t ** (state.n - 1))
    return float(integrate.simpson(np.abs(state.b) ** p * weight, x=state.grid))


@dataclass(frozen=True)
class TailCheck:
    exponent: float   # integrand of I_p decays like s**exponent
    finite: bool
    strong_condition: bool  # alpha p > n + 1


def lp_tail(n: int, alpha: float, p: float) -> TailCheck:
    """Decay of the I_p integrand beyond the grid for a barrier with exponent alpha."""
    e = n - 1 - alpha * p
    return TailCheck(e, e < -1, alpha * p > n + 1)


def equivalence_ratios(state: RadialState) -> tuple[float, float, float, float]:
    rr = state.radial_eig() / state.base.dphi
    tt = state.tangential_eig() / state.base.phi
    return float(rr.min()), float(rr.max()), float(tt.min()), float(tt.max())


def _scale(b: np.ndarray) -> float:
    return float(np.max(np.abs(b))) if b.size else 0.0


def is_monotone(b: np.ndarray) -> bool:
    return bool(np.all(np.diff(b) <= DEAD_BAND * _scale(b)))


def count_crossings(b: np.ndarray, level: float) -> int:
    """Strict sign changes of b - level, ignoring values inside the dead band."""
    d = b - level
    band = DEAD_BAND * max(_scale(b), abs(level))
    signs = np.sign(np.where(np.abs(d) <= band, 0.0, d))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def monotone_and_sign_changes(state: RadialState, level: float) -> tuple[bool, int]:
    if not np.any(state.b):
        return True, 0
    return is_monotone(state.b), count_crossings(state.b, level)


@dataclass
class Sample:
    t: float
    sup: float
    inf: float
    osc: float
    lp: float
    eq_rr_min: float
    eq_rr_max: float
    eq_tt_min: float
    eq_tt_max: float
    monotone: bool
    sign_changes: int
    # parabolicity margins and the boundary diagnostic, kept out of the CSV
    radial_min: float = float("nan")
    tangential_min: float = float("nan")
    boundary_rate: float = float("nan")

    def csv_row(self) -> list[str]:
        row = []
        for name in CSV_FIELDS:
            v = getattr(self, name)
            if isinstance(v, (bool, np.bool_)):
                row.append("true" if v else "false")
            elif isinstance(v, (int, np.integer)):
                row.append(str(int(v)))
            else:
                row.append(repr(float(v)))
        return row


def boundary_rate(state: RadialState) -> float:
    """Rate F[b] the frozen right node would have if it were free (one-sided stencils).

    The Dirichlet closure sets this to zero, so its size measures the flux the
    truncation withholds from the domain.
    """
    base = state.base
    return float(np.log1p(state.d2b[-1] / base.dphi[-1])
                 + (state.n - 1) * np.log1p(state.db[-1] / base.phi[-1]) + state.db[-1])


def sample(state: RadialState, p: float) -> Sample:
    hi, lo, osc = oscillation(state)
    level = 0.5 * (hi + lo)
    mono, crossings = monotone_and_sign_changes(state, level)
    return Sample(
        state.t, hi, lo, osc, lp_quantity(state, p), *equivalence_ratios(state),
        mono, crossings,
        float(state.radial_eig().min()), float(state.tangential_eig().min()),
        boundary_rate(state),
    )


@dataclass
class DiagnosticsSeries:
    samples: list[Sample] = field(default_factory=list)

    def append(self, s: Sample) -> None:
        if self.samples and not s.t > self.samples[-1].t:
            raise ValueError("sample times must be strictly increasing")
        self.samples.append(s)

    def __len__(self) -> int:
        return len(self.samples)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for s in self.samples:
                w.writerow(s.csv_row())

    def to_records(self) -> list[dict]:
        return [asdict(s) for s in self.samples]


def nonincreasing(values, abs_tol: float = 0.0, rel_tol: float = 0.0) -> bool:
    """Every consecutive pair satisfies v[k+1] <= v[k] (1 + rel_tol) + abs_tol."""
    v = np.asarray(values, dtype=float)
    return bool(np.all(v[1:] <= v[:-1] * (1 + rel_tol) + abs_tol))
