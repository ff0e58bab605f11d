"""Zero-energy scattering, the Neumann problem on a ball, and the correlation kernel eta.

Everything is radial and solved for m(r) = r f(r), which removes the origin
singularity. Inside the support [0, R] the equation -m'' + (V/2 - lam) m = 0 is
integrated with fixed-step RK4; outside the support the solution is the free
wave, known in closed form, so the long stretch [R, N*ell] costs nothing and
introduces no discretization error.

Sums over the dual lattice that are bilinear in eta or linear in eta against
V_hat are evaluated through position-space identities. The kernel w(N.) is
supported in a ball of radius ell < 1/2, so by Poisson summation these lattice
sums equal radial integrals exactly; see ``vw_hat`` and friends.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .errors import NonConvergenceError, NumericalWarning, ValidationError
from .lattice import chi_hats
from .potential import RadialPotential, fourier_hat, j0
from .quadrature import geometric_breaks, panel_rule, subdivide

_MOD = "scattering"


# ----------------------------------------------------------------------------
# small stable special functions

def _one_minus_sinc(t):
    """1 - sin(t)/t without cancellation."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < 0.5
    ts = np.where(small, t, 0.0) ** 2
    series = ts * (1 / 6 - ts * (1 / 120 - ts * (1 / 5040 - ts * (1 / 362880 - ts / 39916800))))
    tl = np.where(small, 1.0, t)
    return np.where(small, series, 1 - np.sin(tl) / tl)


def _x_sinc(x, k):
    """sin(k x)/k, continuous at k = 0."""
    return x * j0(k * x)


# ----------------------------------------------------------------------------
# inner RK4 integration on [0, R]

def _inner_nodes(pot: RadialPotential, steps: int) -> np.ndarray:
    bp = pot.breakpoints
    lengths = np.diff(bp)
    counts = np.maximum(8, np.ceil(steps * lengths / pot.R).astype(int))
    parts = [np.linspace(a, b, n + 1)[:-1] for a, b, n in zip(bp[:-1], bp[1:], counts)]
    return np.concatenate(parts + [bp[-1:]])


def _rk4(pot: RadialPotential, lam: float, nodes: np.ndarray):
    """Integrate -m'' + (V/2 - lam) m = 0 with m(0)=0, m'(0)=1 through the nodes."""
    h = np.diff(nodes)
    # V is evaluated strictly inside each step so jumps at nodes are never straddled
    eps = 1e-14 * pot.R
    q0 = (0.5 * pot(nodes[:-1] + eps) - lam).tolist()
    qh = (0.5 * pot(nodes[:-1] + 0.5 * h) - lam).tolist()
    q1 = (0.5 * pot(nodes[1:] - eps) - lam).tolist()
    hs = h.tolist()
    m, d = 0.0, 1.0
    ms, ds = [m], [d]
    for i in range(len(hs)):
        hh = hs[i]
        a, b, c = q0[i], qh[i], q1[i]
        k1m, k1d = d, a * m
        m2, d2 = m + 0.5 * hh * k1m, d + 0.5 * hh * k1d
        k2m, k2d = d2, b * m2
        m3, d3 = m + 0.5 * hh * k2m, d + 0.5 * hh * k2d
        k3m, k3d = d3, b * m3
        m4, d4 = m + hh * k3m, d + hh * k3d
        k4m, k4d = d4, c * m4
        m += hh * (k1m + 2 * k2m + 2 * k3m + k4m) / 6
        d += hh * (k1d + 2 * k2d + 2 * k3d + k4d) / 6
        ms.append(m)
        ds.append(d)
    return np.array(ms), np.array(ds)


# ----------------------------------------------------------------------------
# scattering length

@dataclass(frozen=True)
class ScatteringLengthResult:
    value: float
    cross_check: float
    rel_diff: float
    steps: int


def scattering_length_report(pot: RadialPotential, rtol: float = 1e-8, steps: int = 1024) -> ScatteringLengthResult:
    """Scattering length from the asymptote of m and from (1/8pi) int V f.

    Step count doubles until two successive asymptote values agree to 1e-11;
    the two routes must then agree to ``rtol``.
    """
    op = "scattering_length"
    if pot.is_zero:
        return ScatteringLengthResult(0.0, 0.0, 0.0, 0)
    prev = None
    for _ in range(10):
        nodes = _inner_nodes(pot, steps)
        m, d = _rk4(pot, 0.0, nodes)
        a0 = pot.R - m[-1] / d[-1]
        if prev is not None and abs(a0 - prev) <= 1e-11 * abs(a0):
            break
        prev = a0
        steps *= 2
    else:
        raise NonConvergenceError("RK4 step doubling did not settle", _MOD, op)
    spline = CubicHermiteSpline(nodes, m, d)
    qn, qw = panel_rule(subdivide(pot.breakpoints, 64 / pot.R), 16)
    # 8 pi a0 = int V f with f = m / (c r), c = m'(R)
    cross = np.sum(qw * qn * pot(qn) * spline(qn)) / (2 * d[-1])
    rel = abs(cross - a0) / abs(a0)
    if rel > rtol:
        raise NonConvergenceError(f"routes disagree: {a0!r} vs {cross!r}", _MOD, op)
    return ScatteringLengthResult(float(a0), float(cross), float(rel), steps)


def scattering_length(pot: RadialPotential) -> float:
    """Zero-energy scattering length a0 (both routes verified to agree)."""
    return scattering_length_report(pot).value


# ----------------------------------------------------------------------------
# Neumann problem on the ball of radius L = N * ell

@dataclass(frozen=True, eq=False)
class ScatteringSolution:
    """Ground state of the Neumann problem, normalized so f(L) = 1.

    m inside the support is a cubic Hermite interpolant of the RK4 nodes; for
    r >= R it is the closed form free solution with m(L) = L, m'(L) = 1.
    """

    potential: RadialPotential
    N: int
    ell: float
    lam: float
    a0: float
    inner_r: np.ndarray
    inner_m: np.ndarray
    inner_dm: np.ndarray
    grid_size: int
    inner_steps: int
    lam_richardson_change: float

    @property
    def L(self) -> float:
        return self.N * self.ell

    @property
    def k(self) -> float:
        return math.sqrt(self.lam)

    @property
    def _kp(self) -> float:
        # wave number of the stored profile; for V = 0 the profile is f = 1
        return 0.0 if self.potential.is_zero else self.k

    @property
    def R(self) -> float:
        return self.potential.R

    @cached_property
    def _spline(self):
        if self.inner_r.size < 2:
            return None
        return CubicHermiteSpline(self.inner_r, self.inner_m, self.inner_dm)

    @cached_property
    def _spline_int(self):
        # antiderivative of r - m(r) on [0, R]
        if self._spline is None:
            return None
        return self._spline.antiderivative()

    @cached_property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.grid_size)

    def m_at(self, r):
        r = np.asarray(r, dtype=float)
        x = r - self.L
        out = _x_sinc(x, self._kp) + self.L * np.cos(self._kp * x)
        if self._spline is not None:
            inside = r < self.R
            if np.any(inside):
                out = np.where(inside, self._spline(np.clip(r, 0, self.R)), out)
        return out

    def dm_at(self, r):
        r = np.asarray(r, dtype=float)
        x = r - self.L
        out = np.cos(self._kp * x) - self.L * self._kp * np.sin(self._kp * x)
        if self._spline is not None:
            inside = r < self.R
            if np.any(inside):
                out = np.where(inside, self._spline(np.clip(r, 0, self.R), 1), out)
        return out

    def rw_at(self, r):
        """r * w(r) = r - m(r), evaluated without cancellation outside the support."""
        r = np.asarray(r, dtype=float)
        x = r - self.L
        t = self._kp * x
        out = x * _one_minus_sinc(t) + 2 * self.L * np.sin(0.5 * t) ** 2
        if self._spline is not None:
            inside = r < self.R
            if np.any(inside):
                out = np.where(inside, r - self._spline(np.clip(r, 0, self.R)), out)
        return np.where(r <= self.L, out, 0.0)

    def w_at(self, r):
        r = np.asarray(r, dtype=float)
        rr = np.where(r > 0, r, 1.0)
        w = self.rw_at(rr) / rr
        if np.any(r <= 0):
            w = np.where(r > 0, w, 1.0 - self.dm_at(0.0))
        return w

    def f_at(self, r):
        return 1.0 - self.w_at(r)

    def dw_at(self, r):
        """Radial derivative w'(r) = (m - r m')/r^2."""
        r = np.asarray(r, dtype=float)
        return (self.m_at(r) - r * self.dm_at(r)) / r**2

    def H_at(self, t):
        """H(t) = int_0^t u w(u) du, constant for t >= L."""
        t = np.minimum(np.asarray(t, dtype=float), self.L)
        k, L = self._kp, self.L

        def Q(x):
            # int_0^x (y - sin(ky)/k + L(1 - cos(ky))) dy, written stably
            tk = 0.5 * k * x
            s = j0(tk)
            return 0.5 * x**2 * (1 - s) * (1 + s) + L * x * _one_minus_sinc(k * x)

        if self._spline_int is None:
            return Q(t - L) - Q(-L)
        HR = 0.5 * self.R**2 - float(self._spline_int(self.R))
        inner = 0.5 * np.clip(t, 0, self.R) ** 2 - self._spline_int(np.clip(t, 0, self.R))
        outer = HR + Q(t - L) - Q(self.R - L)
        return np.where(t < self.R, inner, outer)

    @property
    def m(self) -> np.ndarray:
        return self.m_at(self.grid)

    @property
    def f(self) -> np.ndarray:
        return self.f_at(self.grid)

    @property
    def w(self) -> np.ndarray:
        return self.w_at(self.grid)

    def header(self) -> dict:
        return {"N": self.N, "ell": self.ell, "lambda_ell": self.lam, "a0": self.a0,
                "L": self.L, "grid_size": self.grid_size, "inner_steps": self.inner_steps,
                "lambda_richardson_change": self.lam_richardson_change}

    def to_csv(self, path) -> None:
        path = Path(path)
        r = self.grid
        data = np.column_stack([r, self.m_at(r), self.f_at(r), self.w_at(r)])
        np.savetxt(path, data, delimiter=",", header="r,m,f,w", comments="", fmt="%.17g")
        path.with_suffix(".json").write_text(json.dumps(self.header(), indent=2, sort_keys=True) + "\n")


def _outside_values(k: float, L: float, R: float):
    x = R - L
    mo = _x_sinc(x, k) + L * math.cos(k * x)
    dmo = math.cos(k * x) - L * k * math.sin(k * x)
    return mo, dmo


def _neumann_root(pot, L, nodes, a0):
    def mismatch(lam):
        m, d = _rk4(pot, lam, nodes)
        mo, dmo = _outside_values(math.sqrt(lam), L, pot.R)
        return d[-1] * mo - m[-1] * dmo

    guess = 3 * a0 / L**3
    lo = 0.25 * guess
    for _ in range(40):
        if mismatch(lo) > 0:
            break
        lo *= 0.25
    else:
        raise NonConvergenceError("no positive mismatch near lambda = 0", _MOD, "solve_neumann")
    hi = lo
    f_hi = mismatch(hi)
    for _ in range(400):
        hi *= 1.25
        f_hi = mismatch(hi)
        if f_hi < 0:
            break
        lo = hi
    else:
        raise NonConvergenceError("bisection bracket for lambda not found", _MOD, "solve_neumann")
    return brentq(mismatch, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=300)


def solve_neumann(pot: RadialPotential, N: int, ell: float, grid_size: int = 2000,
                  inner_steps: int = 2048, rtol: float = 1e-8) -> ScatteringSolution:
    """Smallest positive eigenpair of -m'' + V m/2 = lam m on [0, N ell] with m'(L) L = m(L)."""
    op = "solve_neumann"
    if int(N) != N or N < 2:
        raise ValidationError(f"N must be an integer >= 2, got {N}", _MOD, op)
    if not 0 < ell < 0.5:
        raise ValidationError(f"ell must lie in (0, 1/2), got {ell}", _MOD, op)
    if grid_size < 1000:
        raise ValidationError(f"grid_size must be >= 1000, got {grid_size}", _MOD, op)
    N = int(N)
    L = N * ell
    if not pot.is_zero and L <= pot.R:
        raise ValidationError(f"ball radius N*ell={L} must exceed the support R={pot.R}", _MOD, op)
    a0 = scattering_length(pot)
    if pot.is_zero:
        # lam is the smallest positive free Neumann eigenvalue, tan(kL) = kL; the
        # stored profile is the constant mode f = 1, so w and its transforms vanish
        x1 = brentq(lambda x: math.sin(x) - x * math.cos(x), math.pi, 1.5 * math.pi, xtol=1e-15)
        lam = (x1 / L) ** 2
        empty = np.zeros(0)
        return ScatteringSolution(pot, N, float(ell), lam, 0.0, empty, empty, empty, grid_size, 0, 0.0)
    steps = inner_steps
    lam_prev = None
    for _ in range(8):
        nodes = _inner_nodes(pot, steps)
        lam = _neumann_root(pot, L, nodes, a0)
        if lam_prev is not None:
            change = abs(lam - lam_prev) / lam
            if change <= rtol:
                break
        lam_prev = lam
        steps *= 2
    else:
        raise NonConvergenceError("grid too coarse: Richardson halving keeps changing lambda", _MOD, op)
    m, d = _rk4(pot, lam, nodes)
    mo, _ = _outside_values(math.sqrt(lam), L, pot.R)
    scale = mo / m[-1]
    return ScatteringSolution(pot, N, float(ell), float(lam), a0, nodes, m * scale, d * scale,
                              grid_size, steps, float(change))


# ----------------------------------------------------------------------------
# independent eigenvalue route: lumped linear finite elements

def _fd_lambda(pot: RadialPotential, L: float, h: float) -> float:
    R = pot.R if not pot.is_zero else 0.0
    if R > 0:
        inner = subdivide(pot.breakpoints, 1.0 / h)
        outer = geometric_breaks(R, L, 1.0 + 2 * h / R)
        # cap the outer spacing so the far field is resolved too
        outer = subdivide(outer, 1.0 / (400 * h))
        x = np.concatenate([inner, outer[1:]])
    else:
        x = np.linspace(0.0, L, int(np.ceil(L / h)) + 1)
    hs = np.diff(x)
    # unknowns at x[1:]; m(0) = 0
    # stiffness from int m'^2 + int V m^2 / 2 (consistent), lumped mass for lambda
    vmid = 0.5 * pot(0.5 * (x[:-1] + x[1:]))
    kd = 1.0 / hs + vmid * hs / 3
    ko = -1.0 / hs + vmid * hs / 6
    main = kd.copy()
    main[:-1] += kd[1:]
    mass = 0.5 * hs
    mass[:-1] += 0.5 * hs[1:]
    off = ko[1:]
    main[-1] -= 1.0 / L
    s = 1.0 / np.sqrt(mass)
    vals = eigh_tridiagonal(main * s * s, off * s[:-1] * s[1:], eigvals_only=True, select="i",
                            select_range=(0, 0), lapack_driver="stebz", tol=np.finfo(float).tiny)
    return float(vals[0])


def neumann_eigenvalue_fd(pot: RadialPotential, N: int, ell: float, h: float | None = None) -> float:
    """Neumann eigenvalue by lumped finite elements with one Richardson step.

    Independent of the shooting solver; used to cross-check lambda.
    """
    L = N * ell
    if h is None:
        h = (pot.R if not pot.is_zero else L) / 400
    lam_h = _fd_lambda(pot, L, h)
    lam_h2 = _fd_lambda(pot, L, h / 2)
    return (4 * lam_h2 - lam_h) / 3


# ----------------------------------------------------------------------------
# integrals of w and related radial transforms

def _outer_rule(sol: ScatteringSolution, kmax: float, order: int = 16):
    R = sol.R if not sol.potential.is_zero else 0.0
    L = sol.L
    start = max(R, 1e-3 * L)
    br = geometric_breaks(start, L, 1.3)
    if R == 0:
        br = np.concatenate([[0.0], br])
    br = subdivide(br, max(kmax, 1.0 / L) / 2.0)
    return panel_rule(br, order)


def _inner_rule(sol: ScatteringSolution, order: int = 16):
    if sol.potential.is_zero:
        return np.zeros(0), np.zeros(0)
    return panel_rule(subdivide(sol.potential.breakpoints, 32 / sol.R), order)


def integral_w(sol: ScatteringSolution) -> float:
    """int_{R^3} w = 4 pi int_0^L r^2 w(r) dr."""
    return float(w_hat(sol, 0.0))


def w_hat(sol: ScatteringSolution, k):
    """Radial transform w_hat(k) = 4 pi int_0^L r^2 w(r) j0(kr) dr; scalar or array k."""
    k = np.abs(np.asarray(k, dtype=float))
    scalar = k.ndim == 0
    kk = np.atleast_1d(k)
    if sol.potential.is_zero:
        out = np.zeros_like(kk)
        return float(out[0]) if scalar else out
    kmax = float(kk.max()) if kk.size else 0.0
    ni, wi = _inner_rule(sol)
    no, wo = _outer_rule(sol, kmax)
    nodes = np.concatenate([ni, no])
    weights = np.concatenate([wi, wo])
    g = weights * nodes * sol.rw_at(nodes)
    out = np.empty_like(kk)
    chunk = max(1, 4_000_000 // max(nodes.size, 1))
    for s in range(0, kk.size, chunk):
        out[s:s + chunk] = 4 * np.pi * (j0(np.outer(kk[s:s + chunk], nodes)) @ g)
    return float(out[0]) if scalar else out


def _inside_transform(sol: ScatteringSolution, k, weight_fn):
    k = np.abs(np.asarray(k, dtype=float))
    scalar = k.ndim == 0
    kk = np.atleast_1d(k)
    if sol.potential.is_zero:
        out = np.zeros_like(kk)
    else:
        ni, wi = _inner_rule(sol)
        g = wi * ni**2 * sol.potential(ni) * weight_fn(ni)
        out = 4 * np.pi * (j0(np.outer(kk, ni)) @ g)
    return float(out[0]) if scalar else out


def vf_hat(sol: ScatteringSolution, k):
    """(V f_ell)^(k); at k = p/N it equals the full lattice convolution (V_hat(./N) * f_hat)_p."""
    return _inside_transform(sol, k, sol.f_at)


def vw_hat(sol: ScatteringSolution, k):
    """(V w_ell)^(k) = V_hat(k) - (V f_ell)^(k)."""
    return _inside_transform(sol, k, sol.w_at)


def int_V_f(sol: ScatteringSolution) -> float:
    return float(vf_hat(sol, 0.0))


def radial_moments(sol: ScatteringSolution) -> dict:
    """Position-space integrals feeding the lattice sums: int V w, int V w^2, int w^2,
    int |grad w|^2, int (V f)(w * w) and int V (w * w), all over R^3."""
    if sol.potential.is_zero:
        return {"int_Vw": 0.0, "int_Vw2": 0.0, "int_w2": 0.0, "int_gradw2": 0.0, "int_Vf_wconvw": 0.0,
                "int_V_wconvw": 0.0}
    ni, wi = _inner_rule(sol)
    no, wo = _outer_rule(sol, 0.0)
    V = sol.potential(ni)
    wn = sol.w_at(ni)
    fourpi = 4 * np.pi
    int_Vw = fourpi * np.sum(wi * ni**2 * V * wn)
    int_Vw2 = fourpi * np.sum(wi * ni**2 * V * wn**2)
    allr = np.concatenate([ni, no])
    allw = np.concatenate([wi, wo])
    int_w2 = fourpi * np.sum(allw * sol.rw_at(allr) ** 2)
    int_gradw2 = fourpi * np.sum(allw * allr**2 * sol.dw_at(allr) ** 2)
    conv = w_self_convolution(sol, ni)
    int_Vf_wconvw = fourpi * np.sum(wi * ni**2 * V * (1 - wn) * conv)
    int_V_wconvw = fourpi * np.sum(wi * ni**2 * V * conv)
    return {"int_Vw": float(int_Vw), "int_Vw2": float(int_Vw2), "int_w2": float(int_w2),
            "int_gradw2": float(int_gradw2), "int_Vf_wconvw": float(int_Vf_wconvw),
            "int_V_wconvw": float(int_V_wconvw)}


def w_self_convolution(sol: ScatteringSolution, r) -> np.ndarray:
    """(w * w)(r) on R^3 for radial w, via (2 pi / r) int s w(s) [H(r+s) - H(|r-s|)] ds."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r)
    R, L = sol.R, sol.L
    far = geometric_breaks(2 * R, L, 1.3) if 2 * R < L else np.array([L])
    for i, ri in enumerate(r):
        near = subdivide(np.unique([0.0, ri, R, min(R + ri, L), min(2 * R, L)]), 16 / R)
        br = np.unique(np.concatenate([near, far, [max(L - ri, 0.0)]]))
        s, ws = panel_rule(br, 16)
        diff = sol.H_at(ri + s) - sol.H_at(np.abs(ri - s))
        out[i] = 2 * np.pi / ri * np.sum(ws * sol.rw_at(s) * diff)
    return out


# ----------------------------------------------------------------------------
# eta table

@dataclass(frozen=True, eq=False)
class EtaTable:
    """eta_p for integer triples |n_i| <= M (p = 2 pi n), plus eta_0 separately.

    ``cube[n + M]`` holds eta_p with the origin slot holding eta_0; ``by_norm2``
    maps |n|^2 to the shared radial value.
    """

    M: int
    N: int
    ell: float
    eta0: float
    cube: np.ndarray
    by_norm2: dict
    solution: ScatteringSolution | None = None

    @cached_property
    def n_vectors(self) -> np.ndarray:
        r = np.arange(-self.M, self.M + 1)
        n = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
        return n[np.any(n != 0, axis=1)]

    @cached_property
    def norm2_cube(self) -> np.ndarray:
        r = np.arange(-self.M, self.M + 1)
        a, b, c = np.meshgrid(r, r, r, indexing="ij")
        return a * a + b * b + c * c

    @property
    def nonzero_mask(self) -> np.ndarray:
        return self.norm2_cube > 0

    def value(self, n) -> float:
        n2 = int(np.dot(n, n))
        if n2 == 0:
            return self.eta0
        if max(abs(int(c)) for c in n) > self.M:
            raise ValidationError(f"momentum {tuple(n)} outside table cutoff {self.M}", _MOD, "EtaTable")
        return self.by_norm2[n2]

    def values(self) -> np.ndarray:
        """eta for every stored p != 0 in the order of ``n_vectors``."""
        n = self.n_vectors
        return self.cube[n[:, 0] + self.M, n[:, 1] + self.M, n[:, 2] + self.M]

    @cached_property
    def decay_constant(self) -> float:
        """Fitted C in |eta_p| <= C / p^2 (supremum over the table)."""
        p2 = (2 * np.pi) ** 2 * self.norm2_cube
        mask = self.nonzero_mask
        return float(np.max(p2[mask] * np.abs(self.cube[mask])))

    @cached_property
    def norm2_sq(self) -> float:
        """Truncated ||eta||_2^2 over stored p != 0."""
        return float(np.sum(self.cube[self.nonzero_mask] ** 2))

    def to_csv(self, path) -> None:
        n = self.n_vectors
        data = np.column_stack([n, self.values()])
        with open(path, "w") as fh:
            fh.write("n1,n2,n3,eta\n")
            fh.write(f"0,0,0,{self.eta0:.17g}\n")
            for row in data:
                fh.write(f"{int(row[0])},{int(row[1])},{int(row[2])},{row[3]:.17g}\n")


def eta_coefficients(sol: ScatteringSolution, M: int) -> EtaTable:
    """eta_p = -w_hat(p/N)/N^2 on the cube |n_i| <= M, one radial evaluation per |n|^2."""
    if int(M) != M or M < 1:
        raise ValidationError(f"cutoff M must be an integer >= 1, got {M}", _MOD, "eta_coefficients")
    M = int(M)
    N = sol.N
    r = np.arange(-M, M + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    n2cube = a * a + b * b + c * c
    classes = np.unique(n2cube)
    k = 2 * np.pi * np.sqrt(classes.astype(float)) / N
    wh = w_hat(sol, k)
    eta_cls = -wh / N**2
    lookup = np.zeros(classes.max() + 1)
    lookup[classes] = eta_cls
    cube = lookup[n2cube]
    eta0 = float(eta_cls[0])
    by_norm2 = {int(q): float(v) for q, v in zip(classes[1:], eta_cls[1:])}
    cube.setflags(write=False)
    return EtaTable(M, N, sol.ell, eta0, cube, by_norm2, sol)


# ----------------------------------------------------------------------------
# scattering relation residual

@dataclass(frozen=True)
class RelationResidual:
    residual: float
    lhs: float
    rhs: float
    chi_tail: float
    lhs_table_truncated: float


def eta_relation_residual(sol: ScatteringSolution, table: EtaTable, n, eps: float = 1e-300) -> RelationResidual:
    """Residual of p^2 eta_p + V_hat(p/N)/2 + (1/2N) sum_q V_hat((p-q)/N) eta_q
    = N^3 lam chi_hat(p) + N^2 lam sum_q chi_hat(p-q) eta_q.

    The V_hat convolution is the full lattice sum, evaluated through its
    position-space identity -(V w)^(p/N)/2; its cube-truncated value is
    reported alongside. The chi_hat convolution is summed over the table
    (q = 0 included) with an envelope tail estimate.
    """
    n = np.asarray(n, dtype=int)
    M, N = table.M, table.N
    if np.max(np.abs(n)) > M // 4:
        warnings.warn(f"momentum {tuple(n)} outside the reliable core |n_i| <= M/4", NumericalWarning)
    pot = sol.potential
    p = 2 * np.pi * np.linalg.norm(n)
    eta_p = table.value(n)
    vhat_p = fourier_hat(pot, p / N)
    conv_exact = -0.5 * vw_hat(sol, p / N)
    lhs = p * p * eta_p + 0.5 * vhat_p + conv_exact

    r = np.arange(-M, M + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    dq = 2 * np.pi * np.sqrt((n[0] - a) ** 2 + (n[1] - b) ** 2 + (n[2] - c) ** 2)
    chi = chi_hats(sol.ell, dq)[0]
    chi_sum = float(np.sum(chi * table.cube))
    rhs = N**3 * sol.lam * chi_hats(sol.ell, p)[0] + N**2 * sol.lam * chi_sum
    # |chi_hat(q)| <= 8 pi ell / q^2 away from q = 0 and |eta_q| <= C/q^2
    Q = 2 * np.pi * (M + 1)
    tail = N**2 * sol.lam * 8 * np.pi * sol.ell * table.decay_constant * 4 * np.pi / ((2 * np.pi) ** 3 * Q)
    vh = fourier_hat(pot, dq / N)
    lhs_trunc = p * p * eta_p + 0.5 * vhat_p + float(np.sum(vh * table.cube)) / (2 * N)
    res = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + eps)
    return RelationResidual(float(res), float(lhs), float(rhs), float(tail), float(lhs_trunc))
