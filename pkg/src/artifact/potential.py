"""Radial interaction potentials and their three-dimensional Fourier transforms.

A potential is nonnegative, radial and supported in the ball of radius R.
The Fourier transform of a radial function reduces to a one-dimensional
integral,

    V_hat(k) = 4 pi int_0^R r^2 V(r) sin(kr)/(kr) dr,

which is written with the spherical Bessel function j0 so that no separate
small-k branch is needed for quadrature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path

import numpy as np

from .errors import NonConvergenceError, ValidationError
from .quadrature import panel_rule, subdivide

_MOD = "potential"


def j0(x):
    """Spherical Bessel function sin(x)/x, exact at x = 0."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def _series_ratio(x, power: int, terms: int = 28):
    # int_0^1 s^power sin(x s)/(x s) ds as a Taylor series in x
    x2 = np.asarray(x, dtype=float) ** 2
    total = np.zeros_like(x2)
    for n in reversed(range(terms)):
        c = (-1) ** n / (factorial(2 * n + 1) * (2 * n + power + 1))
        total = total * x2 + c
    return total


def ball_moment_hat(x, power: int):
    """int_0^1 s^power j0(x s) ds for power in {1, 2, 4}, stable for all x >= 0.

    power=2 gives the normalized transform of a ball indicator,
    power=4 of |x|^2 on a ball, power=1 of 1/|x| on a ball.
    """
    x = np.abs(np.asarray(x, dtype=float))
    small = x < 2.0
    xs = np.where(small, x, 1.0)
    xl = np.where(small, 1.0, x)
    s, c = np.sin(xl), np.cos(xl)
    if power == 2:
        big = (s - xl * c) / xl**3
    elif power == 4:
        big = -6 * s / xl**5 + 6 * c / xl**4 + 3 * s / xl**3 - c / xl**2
    elif power == 1:
        big = (1 - c) / xl**2
    else:
        raise ValueError("power must be 1, 2 or 4")
    return np.where(small, _series_ratio(xs, power), big)


@dataclass(frozen=True, eq=False)
class RadialPotential:
    """Immutable radial potential.

    kind is "soft_sphere", "tabulated" or "zero". Tabulated potentials are
    piecewise linear between the samples and vanish beyond the last radius R.
    """

    kind: str
    v0: float
    R: float
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "soft_sphere":
            return np.where(r <= self.R, self.v0, 0.0)
        inside = np.interp(r, self.radii, self.values)
        return np.where(r <= self.R, inside, 0.0)

    @property
    def breakpoints(self) -> np.ndarray:
        """Radii in [0, R] where V may fail to be smooth, always including 0 and R."""
        if self.kind == "zero":
            return np.array([0.0])
        if self.kind == "soft_sphere":
            return np.array([0.0, self.R])
        pts = np.unique(np.concatenate([[0.0], self.radii]))
        return pts

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def describe(self) -> dict:
        d = {"kind": self.kind, "v0": self.v0, "R": self.R}
        if self.kind == "tabulated":
            d["samples"] = len(self.radii)
        return d


def zero_potential() -> RadialPotential:
    """The trivial potential V = 0."""
    return RadialPotential("zero", 0.0, 0.0)


def make_soft_sphere(v0: float, R: float, *, allow_large_support: bool = False) -> RadialPotential:
    """Soft sphere V = v0 on the ball of radius R.

    ``allow_large_support`` lifts the R < 1/2 box constraint for problems posed on
    the whole space (e.g. the scattering length with R = 1).
    """
    if not np.isfinite(v0) or v0 <= 0:
        raise ValidationError(f"v0 must be positive, got {v0}", _MOD, "make_soft_sphere")
    if not np.isfinite(R) or R <= 0:
        raise ValidationError(f"R must be positive, got {R}", _MOD, "make_soft_sphere")
    if R >= 0.5 and not allow_large_support:
        raise ValidationError(f"support radius R={R} must be < 1/2", _MOD, "make_soft_sphere")
    return RadialPotential("soft_sphere", float(v0), float(R))


def make_tabulated(radii, values, *, allow_large_support: bool = False) -> RadialPotential:
    """Piecewise-linear potential through the samples (radii strictly increasing, values >= 0)."""
    r = np.asarray(radii, dtype=float).copy()
    v = np.asarray(values, dtype=float).copy()
    op = "make_tabulated"
    if r.ndim != 1 or r.shape != v.shape or r.size < 2:
        raise ValidationError("need matching 1D arrays with at least two samples", _MOD, op)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
        raise ValidationError("samples must be finite", _MOD, op)
    if r[0] < 0 or np.any(np.diff(r) <= 0):
        raise ValidationError("radii must be nonnegative and strictly increasing", _MOD, op)
    if np.any(v < 0):
        raise ValidationError("values must be nonnegative", _MOD, op)
    if not np.any(v > 0):
        raise ValidationError("tabulated potential is identically zero; use zero_potential()", _MOD, op)
    R = float(r[-1])
    if R >= 0.5 and not allow_large_support:
        raise ValidationError(f"support radius R={R} must be < 1/2", _MOD, op)
    if r[0] > 0:
        r = np.concatenate([[0.0], r])
        v = np.concatenate([[v[0]], v])
    r.setflags(write=False)
    v.setflags(write=False)
    return RadialPotential("tabulated", float(v.max()), R, r, v)


def load_tabulated_csv(path, *, allow_large_support: bool = False) -> RadialPotential:
    """Read a two-column CSV (radius, value); a non-numeric header row is skipped."""
    rows = []
    with open(Path(path), newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if rows:
                    raise ValidationError(f"malformed row {row!r}", _MOD, "load_tabulated_csv")
    if not rows:
        raise ValidationError("no samples found", _MOD, "load_tabulated_csv")
    r, v = zip(*rows)
    return make_tabulated(r, v, allow_large_support=allow_large_support)


def radial_integral(pot: RadialPotential, g, order: int = 16, pieces_per_unit: float = 64.0):
    """4 pi int_0^R r^2 V(r) g(r) dr by Gauss-Legendre panels aligned with the breakpoints."""
    if pot.is_zero:
        return 0.0
    nodes, weights = panel_rule(subdivide(pot.breakpoints, pieces_per_unit / pot.R), order)
    return 4 * np.pi * np.sum(weights * nodes**2 * pot(nodes) * g(nodes))


def _hat_quadrature(pot: RadialPotential, k: np.ndarray, panels_per_R: int, order: int = 16) -> np.ndarray:
    breaks = subdivide(pot.breakpoints, panels_per_R / pot.R)
    nodes, weights = panel_rule(breaks, order)
    wv = weights * nodes**2 * pot(nodes)
    return 4 * np.pi * (j0(np.outer(k, nodes)) @ wv)


def fourier_hat(pot: RadialPotential, k, rtol: float = 1e-12):
    """Radial Fourier transform V_hat(|k|); accepts scalars or arrays, even in k."""
    k = np.abs(np.asarray(k, dtype=float))
    scalar = k.ndim == 0
    kk = np.atleast_1d(k)
    if pot.is_zero:
        out = np.zeros_like(kk)
    elif pot.kind == "soft_sphere":
        R = pot.R
        out = 4 * np.pi * pot.v0 * R**3 * ball_moment_hat(kk * R, 2)
    else:
        kmax = float(kk.max()) if kk.size else 0.0
        panels = max(4, int(np.ceil(kmax * pot.R / np.pi)) + 2)
        prev = _hat_quadrature(pot, kk, panels)
        for _ in range(8):
            panels *= 2
            cur = _hat_quadrature(pot, kk, panels)
            scale = np.maximum(np.abs(cur), np.abs(cur).max() * 1e-3)
            if np.all(np.abs(cur - prev) <= rtol * scale + 1e-300):
                out = cur
                break
            prev = cur
        else:
            raise NonConvergenceError("panel doubling did not converge", _MOD, "fourier_hat")
    return float(out[0]) if scalar else out


def integral(pot: RadialPotential) -> float:
    """int V over R^3, i.e. V_hat(0)."""
    return float(fourier_hat(pot, 0.0))
