"""Radial perturbation state and its discrete derivatives."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .soliton import SolitonProfile

# below this |y|/x the tau-integral switches to its two-term Taylor form
TAYLOR_SWITCH = 1e-8


class ParabolicityError(ValueError):
    """The perturbed metric stopped being positive definite."""

    def __init__(self, msg: str, s: float | None = None, index: int | None = None):
        super().__init__(msg)
        self.s = s
        self.index = index


def tau_integral(x, y):
    """int_0^1 dtau / (x + tau y) = log(1 + y/x) / y, with the y -> 0 limit handled."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    small = np.abs(y) < TAYLOR_SWITCH * np.abs(x)
    safe_y = np.where(small, 1.0, y)
    exact = np.log1p(y / x) / safe_y
    taylor = 1.0 / x - y / (2.0 * x * x)
    return np.where(small, taylor, exact)


def derivatives(b: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Central differences inside; reflected ghost node at the left (b' = 0),
    second-order one-sided stencils at the right end."""
    db = np.empty_like(b)
    d2b = np.empty_like(b)
    db[1:-1] = (b[2:] - b[:-2]) / (2 * h)
    d2b[1:-1] = (b[2:] - 2 * b[1:-1] + b[:-2]) / h**2
    db[0] = 0.0
    d2b[0] = 2 * (b[1] - b[0]) / h**2
    db[-1] = (3 * b[-1] - 4 * b[-2] + b[-3]) / (2 * h)
    d2b[-1] = (2 * b[-1] - 5 * b[-2] + 4 * b[-3] - b[-4]) / h**2
    return db, d2b


@dataclass(frozen=True)
class RadialState:
    t: float
    b: np.ndarray
    db: np.ndarray
    d2b: np.ndarray
    base: SolitonProfile

    @classmethod
    def from_b(cls, t: float, base: SolitonProfile, b) -> "RadialState":
        b = np.array(b, dtype=float)
        if b.shape != base.grid.shape:
            raise ValueError("perturbation does not match the grid")
        if b.size < 4:
            raise ValueError("need at least 4 grid points")
        db, d2b = derivatives(b, base.h)
        return cls(float(t), b, db, d2b, base)

    @property
    def grid(self) -> np.ndarray:
        return self.base.grid

    @property
    def n(self) -> int:
        return self.base.n

    def radial_eig(self) -> np.ndarray:
        """phi' + b'': radial eigenvalue of the perturbed metric (times |z|^2)."""
        return self.base.dphi + self.d2b

    def tangential_eig(self) -> np.ndarray:
        """phi + b': the (n-1)-fold tangential eigenvalue (times |z|^2)."""
        return self.base.phi + self.db

    def check_parabolic(self) -> None:
        for name, v in (("phi' + b''", self.radial_eig()), ("phi + b'", self.tangential_eig())):
            bad = np.flatnonzero(~(v > 0))
            if bad.size:
                i = int(bad[np.argmin(v[bad])]) if np.all(np.isfinite(v[bad])) else int(bad[0])
                raise ParabolicityError(
                    f"{name} = {v[i]:.3e} <= 0 at s = {self.grid[i]:.6g}", float(self.grid[i]), i)

    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """(A_r, A_t): tau-averaged inverse eigenvalues between soliton and perturbed metric."""
        a_r = tau_integral(self.base.dphi, self.d2b)
        a_t = tau_integral(self.base.phi, self.db)
        return a_r, a_t


def write_state_csv(path, state: RadialState) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "b", "db", "d2b"])
        for row in zip(state.grid, state.b, state.db, state.d2b):
            w.writerow([repr(float(v)) for v in row])


def read_state_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Return (s, b) columns of a snapshot file."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if header[:2] != ["s", "b"]:
        raise ValueError(f"unexpected header {header}")
    data = np.array([[float(v) for v in r[:2]] for r in rows[1:]])
    return data[:, 0], data[:, 1]
