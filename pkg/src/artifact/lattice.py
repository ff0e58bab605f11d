"""Lattice sums: conditionally convergent cube sums, ball transforms, Born series.

Conditionally convergent sums are taken over cubes |n_i| <= M, in that order
and no other. Their partial-sum traces oscillate with O(1) amplitude, so the
limit is read off a twice-smoothed trace: each smoothing replaces the value at
cutoff M by a Hann-weighted mean of the trace over [M/2, M]. Averaging
consecutive partial sums never reorders the series.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import fftconvolve
from scipy.special import erfc

from .errors import NonConvergenceError, NumericalWarning, ValidationError
from .potential import RadialPotential, ball_moment_hat, fourier_hat

_MOD = "lattice"
TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class LatticeSumResult:
    value: float
    cutoff: int
    method: str
    error: float
    trace: tuple = ()
    extra: dict = field(default_factory=dict)


# ----------------------------------------------------------------------------
# ball transforms

def chi_hats(ell: float, p):
    """Fourier transforms of the ball indicator chi_ell, of chi_ell |x|^2 and of chi_ell/|x|.

    Returns three arrays (or floats) evaluated at radial momentum |p|.
    """
    p = np.abs(np.asarray(p, dtype=float))
    u = ell * p
    chi = 4 * np.pi * ell**3 * ball_moment_hat(u, 2)
    chi_x2 = 4 * np.pi * ell**5 * ball_moment_hat(u, 4)
    chi_inv = 4 * np.pi * ell**2 * ball_moment_hat(u, 1)
    if p.ndim == 0:
        return float(chi), float(chi_x2), float(chi_inv)
    return chi, chi_x2, chi_inv


# ----------------------------------------------------------------------------
# enumeration helpers

@lru_cache(maxsize=8)
def representation_counts(n2max: int) -> np.ndarray:
    """r3[s] = number of n in Z^3 with |n|^2 = s, for s <= n2max."""
    squares = np.arange(0, math.isqrt(n2max) + 1) ** 2
    weights = np.where(squares == 0, 1, 2)

    def add_axis(prev):
        out = np.zeros(n2max + 1, dtype=np.int64)
        for sq, w in zip(squares, weights):
            out[sq:] += w * prev[: n2max + 1 - sq]
        return out

    one = np.zeros(n2max + 1, dtype=np.int64)
    one[squares] = weights
    three = add_axis(add_axis(one))
    three.setflags(write=False)
    return three


def square_partial_sum(summand, M: int) -> float:
    """Sum of summand(n1, n2, n3) over n in Z^3 \\ {0} with |n_i| <= M.

    Points are visited in lexicographic order and accumulated with math.fsum,
    so the result is correctly rounded and bit-reproducible.
    """
    if int(M) != M or M < 1:
        raise ValidationError(f"M must be an integer >= 1, got {M}", _MOD, "square_partial_sum")
    r = np.arange(-M, M + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    a, b, c = a.ravel(), b.ravel(), c.ravel()
    keep = (a != 0) | (b != 0) | (c != 0)
    vals = np.asarray(summand(a[keep], b[keep], c[keep]), dtype=float)
    return math.fsum(vals.tolist())


def square_partial_trace(summand, M_max: int) -> np.ndarray:
    """Partial sums S_M for M = 1..M_max over cubes |n_i| <= M (compensated per shell)."""
    r = np.arange(-M_max, M_max + 1)
    a, b = np.meshgrid(r, r, indexing="ij")
    a, b = a.ravel(), b.ravel()
    mab = np.maximum(np.abs(a), np.abs(b))
    shell_parts: list[list[float]] = [[] for _ in range(M_max + 1)]
    for c in r:
        sh = np.maximum(mab, abs(int(c)))
        keep = (a != 0) | (b != 0) | (c != 0)
        vals = np.asarray(summand(a[keep], b[keep], np.full(keep.sum(), c)), dtype=float)
        shk = sh[keep]
        order = np.argsort(shk, kind="stable")
        shs, vs = shk[order], vals[order]
        bounds = np.searchsorted(shs, np.arange(M_max + 2))
        for m in range(1, M_max + 1):
            lo, hi = bounds[m], bounds[m + 1]
            if hi > lo:
                shell_parts[m].append(math.fsum(vs[lo:hi].tolist()))
    shells = [math.fsum(s) for s in shell_parts[1:]]
    out = np.empty(M_max)
    for m in range(M_max):
        out[m] = math.fsum(shells[: m + 1])
    return out


def hann_average(trace: np.ndarray, first: int = 1) -> np.ndarray:
    """Smoothed trace: value at cutoff M is the Hann-weighted mean of trace over [ceil(M/2), M].

    ``trace[i]`` belongs to cutoff ``first + i``. Entries whose window would
    reach before ``first`` are NaN.
    """
    t = np.asarray(trace, dtype=float)
    out = np.full(t.size, np.nan)
    for i in range(t.size):
        M = first + i
        lo = (M + 1) // 2
        if lo < first or M - lo < 2:
            continue
        seg = t[lo - first: i + 1]
        n = seg.size
        w = np.sin(np.pi * (np.arange(n) + 0.5) / n) ** 2
        out[i] = float(np.dot(w, seg) / w.sum())
    return out


def twice_averaged(trace: np.ndarray, first: int = 1) -> tuple[np.ndarray, np.ndarray]:
    a1 = hann_average(trace, first)
    a2 = np.full_like(a1, np.nan)
    valid = np.where(np.isfinite(a1))[0]
    if valid.size:
        start = valid[0]
        a2[start:] = hann_average(a1[start:], first + start)
    return a1, a2


def _averaged_result(trace, method, tol, op, extra=None):
    a1, a2 = twice_averaged(trace)
    M_max = trace.size
    if method == "square-partial":
        value = float(trace[-1])
        err = float(np.ptp(trace[-max(4, M_max // 10):]))
    elif method == "averaged":
        fin = a2[np.isfinite(a2)]
        if fin.size < 4:
            raise ValidationError("cutoff too small for twice-averaged trace", _MOD, op)
        value = float(fin[-1])
        tail = fin[-max(4, M_max // 10):]
        err = float(max(np.ptp(tail), abs(fin[-1] - fin[-2])))
        if err > tol:
            raise NonConvergenceError(f"averaged trace still moves by {err:.3g} > {tol:g}", _MOD, op)
    else:
        raise ValidationError(f"unknown method {method!r}", _MOD, op)
    ex = {"averaged": a1.tolist(), "twice_averaged": a2.tolist()}
    if extra:
        ex.update(extra)
    return LatticeSumResult(value, M_max, method, err, tuple(trace.tolist()), ex)


# ----------------------------------------------------------------------------
# e_Lambda

def _cos_over_n2(a, b, c):
    n2 = (a * a + b * b + c * c).astype(float)
    return np.cos(np.sqrt(n2)) / n2


@dataclass(frozen=True)
class ELambdaResult:
    """Square-partial limit S of sum_{Z^3 \\ 0} cos|n|/n^2 and both normalizations built on it."""

    S: LatticeSumResult
    e_lambda_1: float  # 2 - S
    e_lambda_4: float  # 2 - 4 S

    @property
    def candidates(self) -> dict:
        return {"2-S": self.e_lambda_1, "2-4S": self.e_lambda_4}


def e_lambda(M_max: int = 80, method: str = "averaged", tol: float = 1e-2) -> ELambdaResult:
    """Both candidate values of the box constant from the cube partial sums of cos|n|/n^2."""
    if M_max < 20:
        raise ValidationError(f"M_max must be >= 20, got {M_max}", _MOD, "e_lambda")
    trace = square_partial_trace(_cos_over_n2, M_max)
    S = _averaged_result(trace, method, tol, "e_lambda")
    return ELambdaResult(S, 2.0 - S.value, 2.0 - 4.0 * S.value)


# ----------------------------------------------------------------------------
# I_ell

def chi_identity_lhs(ell: float, shell_cutoff: int = 160) -> tuple[float, float]:
    """-(2/ell^3) sum_{p in 2 pi Z^3 \\ 0} chi_hat_ell(p)/p^2 in shell order.

    The sum converges absolutely; the returned value is the Hann-smoothed
    shell partial sum over radii in [cutoff/2, cutoff] and the second entry is
    the spread of the smoothed values over the last tenth of the radii.
    """
    n2max = shell_cutoff * shell_cutoff
    counts = representation_counts(n2max)
    s = np.nonzero(counts)[0]
    s = s[s > 0]
    p = TWO_PI * np.sqrt(s.astype(float))
    chi = chi_hats(ell, p)[0]
    terms = counts[s] * chi / p**2
    partial = np.cumsum(terms)
    # partial sums at integer shell radii
    radii = np.arange(1, shell_cutoff + 1)
    idx = np.searchsorted(s, radii * radii, side="right") - 1
    trace = -(2 / ell**3) * partial[idx]
    smooth = hann_average(trace, 1)
    fin = smooth[np.isfinite(smooth)]
    spread = float(np.ptp(fin[-max(4, fin.size // 10):]))
    return float(fin[-1]), spread


def _cos_ell_over_p2(ell):
    def summand(a, b, c):
        n2 = (a * a + b * b + c * c).astype(float)
        p = TWO_PI * np.sqrt(n2)
        return np.cos(ell * p) / (p * p)
    return summand


def i_ell(ell: float, M_max: int = 80, method: str = "averaged", tol: float = 1e-2,
          shell_cutoff: int = 160) -> LatticeSumResult:
    """I_ell = 4 pi ell^2/3 - (8 pi/3) lim sum_{p in 2 pi Z^3 \\ 0, cube} cos(ell|p|)/p^2.

    ``extra`` carries the independent value from the absolutely convergent
    chi_hat identity and the identity residual.
    """
    if not 0 < ell < 0.5:
        raise ValidationError(f"ell must lie in (0, 1/2), got {ell}", _MOD, "i_ell")
    trace = square_partial_trace(_cos_ell_over_p2(ell), M_max)
    i_trace = 4 * np.pi * ell**2 / 3 - (8 * np.pi / 3) * trace
    res = _averaged_result(i_trace, method, tol * 8 * np.pi / 3, "i_ell")
    lhs, spread = chi_identity_lhs(ell, shell_cutoff)
    via_identity = lhs + 1 / ell + 4 * np.pi * ell**2 / 15
    extra = dict(res.extra)
    extra.update({"identity_lhs": lhs, "identity_value": via_identity,
                  "identity_residual": abs(lhs - (res.value - 1 / ell - 4 * np.pi * ell**2 / 15)),
                  "identity_spread": spread, "ell": ell})
    return LatticeSumResult(res.value, res.cutoff, res.method, res.error, res.trace, extra)


# ----------------------------------------------------------------------------
# periodic Green's function constant (Ewald)

def ewald_green_constant(alpha: float = 2.5, cutoff: int = 8) -> float:
    """C0 = lim_{x->0} [sum_{p in 2 pi Z^3 \\ 0} e^{ipx}/p^2 - 1/(4 pi |x|)] on the unit torus."""
    r = np.arange(-cutoff, cutoff + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    n2 = (a * a + b * b + c * c).ravel().astype(float)
    n2 = n2[n2 > 0]
    p2 = (TWO_PI**2) * n2
    recip = math.fsum((np.exp(-p2 / (4 * alpha**2)) / p2).tolist())
    d = np.sqrt(n2)
    real = math.fsum((erfc(alpha * d) / (4 * np.pi * d)).tolist())
    return recip + real - 1 / (4 * alpha**2) - alpha / (2 * np.pi**1.5)


# ----------------------------------------------------------------------------
# Born series

def born_a_N(pot: RadialPotential, N: int, k_max: int = 3, M: int = 16):
    """Partial values 8 pi a_N^(k), k = 0..k_max, from chain sums on the momentum cube.

    g_0(p) = V_hat(p/N), g_{j+1}(p) = -(1/2N) sum_{q != 0, |q_i| <= 2 pi M} V_hat((p-q)/N) g_j(q)/q^2;
    each step is a linear convolution by FFT. Returns (partials, tail_estimates).
    """
    op = "born_a_N"
    if k_max not in (0, 1, 2, 3):
        raise ValidationError("k_max must be in {0, 1, 2, 3}", _MOD, op)
    if N < 1 or M < 1:
        raise ValidationError("need N >= 1 and M >= 1", _MOD, op)
    v0hat = fourier_hat(pot, 0.0)
    if pot.is_zero:
        return [0.0] * (k_max + 1), [0.0] * (k_max + 1)
    rk = np.arange(-2 * M, 2 * M + 1)
    ka, kb, kc = np.meshgrid(rk, rk, rk, indexing="ij")
    kern = fourier_hat(pot, TWO_PI * np.sqrt((ka * ka + kb * kb + kc * kc).astype(float)) / N)
    del ka, kb, kc
    r = np.arange(-M, M + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    q2 = (TWO_PI**2) * (a * a + b * b + c * c).astype(float)
    inv_q2 = np.where(q2 > 0, 1.0 / np.where(q2 > 0, q2, 1.0), 0.0)
    g = kern[M:3 * M + 1, M:3 * M + 1, M:3 * M + 1].copy()
    partials = [v0hat]
    total = v0hat
    for _ in range(k_max):
        g = -fftconvolve(kern, g * inv_q2, mode="valid") / (2 * N)
        total += g[M, M, M]
        partials.append(float(total))
    # envelope tail of the first chain sum outside the cube, scaled for higher orders
    Q = TWO_PI * (M + 0.5)
    qq = np.linspace(Q, Q + 400 * N / max(pot.R, 1e-12), 200001)
    integrand = fourier_hat(pot, qq / N) ** 2
    tail1 = trapezoid(integrand, qq) / (2 * np.pi**2) / (2 * N)
    tails = [0.0] + [tail1 * j for j in range(1, k_max + 1)]
    ratio = abs(partials[1] - v0hat) / v0hat if k_max >= 1 else 0.0
    if ratio > 0.3:
        warnings.warn(f"first Born correction is {ratio:.0%} of V_hat(0); series may not converge",
                      NumericalWarning)
    return partials, tails


class _LegendrePanels:
    """Piecewise Legendre representation on panels of [0, R] for radial chain integrals."""

    def __init__(self, breaks, order: int = 24):
        self.breaks = np.asarray(breaks, dtype=float)
        x, w = np.polynomial.legendre.leggauss(order)
        self.order = order
        a, b = self.breaks[:-1], self.breaks[1:]
        self.half = 0.5 * (b - a)
        self.mid = 0.5 * (b + a)
        self.nodes = (self.mid[:, None] + self.half[:, None] * x[None, :])
        self.weights = self.half[:, None] * w[None, :]
        vander = np.polynomial.legendre.legvander(x, order - 1)
        self.inv_vander = np.linalg.inv(vander)
        # integral from -1 to x_j of P_k, for cumulative integration inside panels
        cum = np.empty((order, order))
        for kdeg in range(order):
            coef = np.zeros(order)
            coef[kdeg] = 1.0
            anti = np.polynomial.legendre.legint(coef, lbnd=-1)
            cum[:, kdeg] = np.polynomial.legendre.legval(x, anti)
        self.cum = cum

    def cumulative(self, values: np.ndarray) -> np.ndarray:
        """int_0^{node} values ds at every node (values given at the nodes)."""
        coef = values @ self.inv_vander.T
        inside = (coef @ self.cum.T) * self.half[:, None]
        totals = np.sum(values * self.weights, axis=1)
        offsets = np.concatenate([[0.0], np.cumsum(totals)[:-1]])
        return inside + offsets[:, None]

    def integral(self, values: np.ndarray) -> float:
        return float(np.sum(values * self.weights))


def _chain_terms(pot: RadialPotential, k_max: int, c0_over_N: float, quad_over_N3: float) -> list[float]:
    """T_j = int V (Gt V)^j for the radial kernel Gt = 1/(4 pi |x|) + c0_over_N + quad_over_N3 |x|^2/6."""
    br = np.unique(np.concatenate([pot.breakpoints, np.linspace(0, pot.R, 9)]))
    grid = _LegendrePanels(br)
    r = grid.nodes
    V = pot(r)
    phi = V.copy()
    terms = [4 * np.pi * grid.integral(r**2 * phi)]
    for _ in range(k_max):
        inner = grid.cumulative(r**2 * phi)
        outer_total = grid.integral(r * phi)
        outer = outer_total - grid.cumulative(r * phi)
        newton = inner / r + outer
        m0 = 4 * np.pi * grid.integral(r**2 * phi)
        m2 = 4 * np.pi * grid.integral(r**4 * phi)
        conv = newton + c0_over_N * m0 + quad_over_N3 * (r**2 * m0 + m2) / 6
        phi = V * conv
        terms.append(4 * np.pi * grid.integral(r**2 * phi))
    return terms


def born_green(pot: RadialPotential, N: float | None, k_max: int = 3, c0: float | None = None) -> list[float]:
    """Partial values 8 pi a_N^(k) with every lattice sum over 2 pi Z^3 \\ 0 taken in full.

    Poisson summation turns each chain sum into a position-space integral with
    the periodic Green's function, whose regular part near 0 is
    C0 + |x|^2/6 + (harmonic terms that integrate to zero against radial data).
    N=None gives the infinite-volume series for 8 pi a0.
    """
    if pot.is_zero:
        return [0.0] * (k_max + 1)
    if c0 is None:
        c0 = ewald_green_constant()
    if N is None:
        terms = _chain_terms(pot, k_max, 0.0, 0.0)
    else:
        terms = _chain_terms(pot, k_max, c0 / N, 1.0 / N**3)
    out, acc = [], 0.0
    for j, t in enumerate(terms):
        acc += (-0.5) ** j * t
        out.append(acc)
    return out


@dataclass(frozen=True)
class BornLimit:
    N_values: tuple
    values: tuple  # 4 pi (N-1)(a_N - a0)/a0^2 per N
    limit: float  # Richardson extrapolation in 1/N
    a0_born: float
    first_born_ratio: float
    c0: float

    @property
    def printed_sign_limit(self) -> float:
        """The same limit with the opposite sign convention (a0 - a_N)."""
        return -self.limit


def born_limit(pot: RadialPotential, N_values=(40, 80, 160), k_max: int = 3) -> BornLimit:
    """lim 4 pi (N-1)(a_N - a0)/a0^2 by three-point Richardson extrapolation in 1/N."""
    c0 = ewald_green_constant()
    inf = born_green(pot, None, k_max, c0)
    a0 = inf[-1] / (8 * np.pi)
    ratio = abs(inf[1] - inf[0]) / inf[0]
    if ratio > 0.3:
        warnings.warn(f"first Born correction is {ratio:.0%} of V_hat(0)", NumericalWarning)
    vals = []
    for N in N_values:
        aN = born_green(pot, N, k_max, c0)[-1] / (8 * np.pi)
        vals.append(4 * np.pi * (N - 1) * (aN - a0) / a0**2)
    h = 1.0 / np.asarray(N_values, dtype=float)
    A = np.vander(h, len(N_values), increasing=True)
    coef = np.linalg.solve(A, np.asarray(vals))
    return BornLimit(tuple(N_values), tuple(vals), float(coef[0]), float(a0), float(ratio), float(c0))


# ----------------------------------------------------------------------------
# adjudication

@dataclass(frozen=True)
class Adjudication:
    winner_direct_vs_i: str
    winner_direct_vs_born: str
    candidates: dict
    i_ell_route: float
    born_route: float
    pairwise: dict
    tolerance: float

    @property
    def same_winner(self) -> bool:
        return self.winner_direct_vs_i == self.winner_direct_vs_born

    @property
    def value(self) -> float:
        return self.candidates[self.winner_direct_vs_born]

    @property
    def passed(self) -> bool:
        return self.same_winner and all(v <= self.tolerance for v in self.pairwise.values())


def adjudicate(direct: ELambdaResult, i_ell_value: float, born_value: float, tol: float = 5e-2) -> Adjudication:
    """Pick the normalization candidate that the I_ell route and the Born route each support.

    The I_ell route enters the energy constant as 6 pi a0^2 I_ell, so its e value is 6 pi I_ell.
    """
    cands = direct.candidates
    e_i = 6 * np.pi * i_ell_value
    win_i = min(cands, key=lambda k: abs(cands[k] - e_i))
    win_b = min(cands, key=lambda k: abs(cands[k] - born_value))
    chosen = cands[win_b]
    pair = {"direct-i_ell": abs(chosen - e_i), "direct-born": abs(chosen - born_value),
            "i_ell-born": abs(e_i - born_value)}
    return Adjudication(win_i, win_b, cands, float(e_i), float(born_value), pair, tol)
