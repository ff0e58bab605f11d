"""Momentum-space coefficients of the quadratic Hamiltonians, their diagonalization,
energy constants, depletion and the excitation spectrum.

Every coefficient depends on p only through |p|, so the infinite sums over
2 pi Z^3 \\ {0} are taken shell by shell with representation counts. Lattice
convolutions with V_hat(./N) are replaced by their position-space values,
which are exact because the correlation kernel lives inside a ball of radius
ell < 1/2:

    (1/N) sum_q V_hat((p-q)/N) eta_q = -(V w)^(p/N)
    (1/N) sum_q V_hat(q/N) eta_q     = -int V w
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
import numpy as np
from scipy.signal import fftconvolve

from .errors import NumericalWarning, ValidationError
from .lattice import representation_counts
from .potential import RadialPotential, fourier_hat
from .scattering import EtaTable, ScatteringSolution, radial_moments, vf_hat, vw_hat, w_hat

_MOD = "bogoliubov"
TWO_PI = 2 * np.pi


def hyperbolic_pair(eta):
    """(sigma, gamma) = (sinh eta, cosh eta)."""
    eta = np.asarray(eta, dtype=float)
    s, g = np.sinh(eta), np.cosh(eta)
    if s.ndim == 0:
        return float(s), float(g)
    return s, g


def _sg_minus_eta(eta):
    # sinh(eta) cosh(eta) - eta without cancellation
    eta = np.asarray(eta, dtype=float)
    x = 2 * eta
    small = np.abs(eta) < 0.1
    xs = np.where(small, x, 0.0)
    series = xs**3 / 12 * (1 + xs**2 / 20 * (1 + xs**2 / 42 * (1 + xs**2 / 72 * (1 + xs**2 / 110))))
    return np.where(small, series, 0.5 * np.sinh(x) - eta)


def _s2_minus_eta2(eta):
    # sinh(eta)^2 - eta^2 without cancellation
    eta = np.asarray(eta, dtype=float)
    x = 2 * eta
    small = np.abs(eta) < 0.1
    xs = np.where(small, x, 0.0)
    series = xs**4 / 48 * (1 + xs**2 / 30 * (1 + xs**2 / 56 * (1 + xs**2 / 90 * (1 + xs**2 / 132))))
    return np.where(small, series, np.sinh(eta) ** 2 - eta**2)


# ----------------------------------------------------------------------------
# quadratic forms

@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Per-momentum pair (diag, offdiag) = (F_p, G_p) or (Phi_p, Gamma_p).

    ``n`` holds integer triples (p = 2 pi n). ``convolution_truncation`` is the
    largest gap between the exact lattice convolution used here and its
    cube-truncated value, reported for information.
    """

    flavor: str
    n: np.ndarray
    F: np.ndarray
    G: np.ndarray
    N: int
    convolution_truncation: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def p2(self) -> np.ndarray:
        return (TWO_PI**2) * np.sum(self.n * self.n, axis=1).astype(float)

    @property
    def stable(self) -> bool:
        return bool(np.all(np.abs(self.G) < self.F))

    @property
    def upper_constant(self) -> float:
        """Fitted C in F_p <= C (1 + p^2)."""
        return float(np.max(self.F / (1 + self.p2)))

    def to_csv(self, path) -> None:
        d = diagonalize(self)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n1", "n2", "n3", "F", "G", "tau", "eps"])
            for i in range(self.n.shape[0]):
                w.writerow([*map(int, self.n[i]), f"{self.F[i]:.17g}", f"{self.G[i]:.17g}",
                            f"{d.tau[i]:.17g}", f"{d.eps[i]:.17g}"])


def _table_arrays(table: EtaTable):
    n = table.n_vectors
    eta = table.values()
    p = TWO_PI * np.sqrt(np.sum(n * n, axis=1).astype(float))
    return n, eta, p


def _truncated_convolution(table: EtaTable, pot: RadialPotential) -> np.ndarray:
    """(1/N) sum_{|q_i| <= M} V_hat((p-q)/N) eta_q for p on the table cube, by FFT."""
    M, N = table.M, table.N
    r = np.arange(-2 * M, 2 * M + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    kern = fourier_hat(pot, TWO_PI * np.sqrt((a * a + b * b + c * c).astype(float)) / N)
    conv = fftconvolve(kern, table.cube, mode="valid") / N
    n = table.n_vectors
    return conv[n[:, 0] + M, n[:, 1] + M, n[:, 2] + M]


def _require_solution(table: EtaTable, op: str) -> ScatteringSolution:
    if table.solution is None:
        raise ValidationError("table carries no scattering solution", _MOD, op)
    return table.solution


def quad_coeffs_J(table: EtaTable, pot: RadialPotential, N: int) -> QuadraticForm:
    """F_p = p^2(s^2 + g^2) + c_p (g + s)^2, G_p = 2 p^2 s g + c_p (g + s)^2, c_p = (V f)^(p/N)."""
    op = "quad_coeffs_J"
    if N != table.N:
        raise ValidationError(f"N={N} differs from table N={table.N}", _MOD, op)
    n, eta, p = _table_arrays(table)
    s, g = hyperbolic_pair(eta)
    if pot.is_zero:
        c = np.zeros_like(p)
        trunc = 0.0
    else:
        sol = _require_solution(table, op)
        c = vf_hat(sol, p / N)
        trunc = float(np.max(np.abs(c - (fourier_hat(pot, p / N) + _truncated_convolution(table, pot)))))
    F = p * p * (s * s + g * g) + c * (g + s) ** 2
    G = 2 * p * p * s * g + c * (g + s) ** 2
    return QuadraticForm("J", n, F, G, N, trunc, {"c": c, "sigma": s, "gamma": g})


def quad_coeffs_G(table: EtaTable, pot: RadialPotential, N: int) -> QuadraticForm:
    """Phi_p, Gamma_p of the once-renormalized Hamiltonian."""
    op = "quad_coeffs_G"
    if N != table.N:
        raise ValidationError(f"N={N} differs from table N={table.N}", _MOD, op)
    n, eta, p = _table_arrays(table)
    s, g = hyperbolic_pair(eta)
    if pot.is_zero:
        z = np.zeros_like(p)
        return QuadraticForm("G", n, z, z.copy(), N, 0.0, {"sigma": s, "gamma": g})
    sol = _require_solution(table, op)
    vh = fourier_hat(pot, p / N)
    conv = -vw_hat(sol, p / N)  # (1/N) sum_q V_hat((p-q)/N) eta_q
    zero = -radial_moments(sol)["int_Vw"]  # (1/N) sum_q V_hat(q/N) eta_q
    trunc = float(np.max(np.abs(conv - _truncated_convolution(table, pot))))
    Phi = 2 * p * p * s * s + vh * (g + s) ** 2 + 2 * g * s * conv - (g * g + s * s) * zero
    Gam = 2 * p * p * s * g + vh * (g + s) ** 2 + (g * g + s * s) * conv - 2 * g * s * zero
    return QuadraticForm("G", n, Phi, Gam, N, trunc, {"sigma": s, "gamma": g})


@dataclass(frozen=True)
class Diagonalization:
    tau: np.ndarray
    eps: np.ndarray
    shift: float


def diagonalize(form: QuadraticForm) -> Diagonalization:
    """tau_p = (1/4) log((F-G)/(F+G)), eps_p = sqrt(F^2 - G^2), shift = (1/2) sum (eps_p - F_p)."""
    F, G = np.asarray(form.F, float), np.asarray(form.G, float)
    bad = ~(np.abs(G) < F)
    if np.any(bad):
        i = int(np.argmax(bad))
        where = tuple(int(x) for x in form.n[i]) if form.n.size else i
        raise ValidationError(f"|G| >= F at momentum {where}: F={F[i]:.6g}, G={G[i]:.6g}", _MOD, "diagonalize")
    tau = 0.25 * np.log((F - G) / (F + G))
    eps = np.sqrt((F - G) * (F + G))
    shift = -0.5 * math.fsum((G * G / (F + eps)).tolist())
    return Diagonalization(tau, eps, shift)


def dispersion_limit(a0: float, p):
    """sqrt(|p|^4 + 16 pi a0 p^2)."""
    if a0 < 0:
        raise ValidationError("a0 must be nonnegative", _MOD, "dispersion_limit")
    p2 = np.asarray(p, dtype=float) ** 2
    out = np.sqrt(p2 * p2 + 16 * np.pi * a0 * p2)
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------------
# shell sums

def _shells(n_max: int):
    counts = representation_counts(n_max * n_max)
    s = np.nonzero(counts)[0]
    s = s[s > 0]
    return s, counts[s].astype(float), TWO_PI * np.sqrt(s.astype(float))


def _check_cutoff(Lam: float, op: str) -> int:
    if not Lam >= 10 * TWO_PI:
        raise ValidationError(f"shell cutoff must be >= 20 pi, got {Lam}", _MOD, op)
    return int(math.floor(Lam / TWO_PI))


def _ebog_summand(c, p2):
    eps = np.sqrt(p2 * p2 + 2 * p2 * c)
    return 0.5 * c**3 * (eps + 3 * p2) / (eps + p2) ** 3


@dataclass(frozen=True)
class ShellSum:
    value: float
    tail: float
    cutoff: float


def ebog(a0: float, Lam: float) -> ShellSum:
    """(1/2) sum_{|p| <= Lam} [eps(p) - p^2 - 8 pi a0 + (8 pi a0)^2/(2 p^2)] in shell order."""
    n_max = _check_cutoff(Lam, "ebog")
    c = 8 * np.pi * a0
    s, cnt, p = _shells(n_max)
    keep = p <= Lam
    val = math.fsum((cnt[keep] * _ebog_summand(c, p[keep] ** 2)).tolist())
    return ShellSum(val, c**3 / (8 * np.pi**2 * Lam), Lam)


@dataclass(frozen=True, eq=False)
class ShellData:
    """Radial coefficient data on the shells |n|^2 = s <= n_max^2."""

    s: np.ndarray
    count: np.ndarray
    p: np.ndarray
    eta: np.ndarray
    c: np.ndarray  # (V f)^(p/N)
    u: np.ndarray  # (V w)^(p/N)
    vhat: np.ndarray
    N: int


def shell_data(sol: ScatteringSolution, n_max: int) -> ShellData:
    s, cnt, p = _shells(n_max)
    N = sol.N
    k = p / N
    eta = -w_hat(sol, k) / N**2
    return ShellData(s, cnt, p, eta, vf_hat(sol, k), vw_hat(sol, k), fourier_hat(sol.potential, k), N)


def default_shell_cutoff(sol: ScatteringSolution) -> int:
    """Shell radius (in units of 2 pi) for sums whose summands decay like |p|^-6 or faster."""
    return 96


def ebog_N(sol: ScatteringSolution, Lam: float | None = None) -> ShellSum:
    """E_Bog with 8 pi a0 replaced by c_p = (V_hat(./N) * f_hat)_p.

    The default cutoff 2 pi max(64, 2N) reaches past |p| ~ N, where c_p
    departs from its small-momentum value.
    """
    Lam = TWO_PI * max(64, 2 * sol.N) if Lam is None else Lam
    n_max = _check_cutoff(Lam, "ebog_N")
    s, cnt, p = _shells(n_max)
    keep = p <= Lam
    p = p[keep]
    c = vf_hat(sol, p / sol.N)
    val = math.fsum((cnt[keep] * _ebog_summand(c, p**2)).tolist())
    return ShellSum(val, float(abs(c[-1]) ** 3 / (8 * np.pi**2 * Lam)), float(Lam))


@dataclass(frozen=True)
class EnergyReport:
    value: float
    leading: float
    e_lambda_term: float
    ebog: ShellSum
    caveat: str = "error O(N^(-1/4)) with unspecified constant"


def ground_state_energy(N: int, a0: float, e_lambda: float, Lam: float) -> EnergyReport:
    """4 pi (N-1) a0 + e_Lambda a0^2 + E_Bog."""
    if N < 2:
        raise ValidationError("N must be >= 2", _MOD, "ground_state_energy")
    eb = ebog(a0, Lam)
    lead = 4 * np.pi * (N - 1) * a0
    return EnergyReport(lead + e_lambda * a0**2 + eb.value, lead, e_lambda * a0**2, eb)


# ----------------------------------------------------------------------------
# energy constants

@dataclass(frozen=True)
class ConstantsReport:
    C_G: float
    C_J: float
    terms_G: dict
    terms_J: dict
    shell_cutoff: int
    remainder_tail: float


def _tt_double_sum(table: EtaTable, pot: RadialPotential) -> float:
    """sum_{p,q != 0} V_hat((p-q)/N) t_p t_q with t = sigma gamma - eta on the table cube."""
    M, N = table.M, table.N
    t = _sg_minus_eta(table.cube)
    t = np.where(table.nonzero_mask, t, 0.0)
    r = np.arange(-2 * M, 2 * M + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    kern = fourier_hat(pot, TWO_PI * np.sqrt((a * a + b * b + c * c).astype(float)) / N)
    conv = fftconvolve(kern, t, mode="valid")
    return float(np.sum(conv * t))


def constants(table: EtaTable, pot: RadialPotential, N: int, n_max: int | None = None,
              shells: ShellData | None = None) -> ConstantsReport:
    """Scalar constants C_{G_N} and C_{J_N} with a per-term breakdown.

    Linear and quadratic pieces in eta are exact lattice sums in position
    space; the nonlinear remainders (sigma gamma - eta, sigma^2 - eta^2) are
    summed over shells, and their pair term over the table cube.
    """
    op = "constants"
    if N != table.N:
        raise ValidationError(f"N={N} differs from table N={table.N}", _MOD, op)
    if pot.is_zero:
        z = {"leading": 0.0}
        return ConstantsReport(0.0, 0.0, z, dict(z), 0, 0.0)
    sol = _require_solution(table, op)
    mom = radial_moments(sol)
    if shells is None:
        shells = shell_data(sol, n_max or default_shell_cutoff(sol))
    sd = shells
    eta0 = table.eta0
    v0 = fourier_hat(pot, 0.0)
    c0 = float(vf_hat(sol, 0.0))
    cnt, p2 = sd.count, sd.p**2
    t = _sg_minus_eta(sd.eta)
    d2 = _s2_minus_eta2(sd.eta)
    fs = math.fsum

    def rem(x):
        return fs((cnt * x).tolist())

    int_Vw, int_Vw2, int_w2, int_gw2 = mom["int_Vw"], mom["int_Vw2"], mom["int_w2"], mom["int_gradw2"]
    lead = (N - 1) / 2 * v0
    kin = N * int_gw2 + rem(p2 * d2)
    v_sg = (-N * int_Vw - v0 * eta0) + rem(sd.vhat * t)
    c_s2 = mom["int_Vf_wconvw"] / N - c0 * eta0**2 + rem(sd.c * d2)
    ee = N**2 * int_Vw2 + 2 * eta0 * N * int_Vw + eta0**2 * v0
    et = 2 * rem(t * (-N * sd.u - sd.vhat * eta0))
    tt = _tt_double_sum(table, pot)
    pair = (ee + et + tt) / (2 * N)
    eta_kin = int_gw2
    eta_pot = 0.5 * int_Vw2
    terms_J = {"leading": lead, "kinetic_sigma2": kin, "vhat_sigma_gamma": v_sg, "conv_f_sigma2": c_s2,
               "pair_sigma_gamma": pair, "eta_kinetic": eta_kin, "eta_potential": eta_pot}
    # C_{G_N}: V_hat(p/N) sigma^2 in place of c_p sigma^2, plus the eta_0-type counterterm
    v_s2 = mom["int_V_wconvw"] / N - v0 * eta0**2 + rem(sd.vhat * d2)
    sum_s2 = int_w2 / N - eta0**2 + rem(d2)
    counter = int_Vw * sum_s2
    terms_G = {"leading": lead, "kinetic_sigma2": kin, "vhat_sigma_gamma": v_sg, "vhat_sigma2": v_s2,
               "pair_sigma_gamma": pair, "eta_kinetic": eta_kin, "eta_potential": eta_pot,
               "counterterm": counter}
    # remainders beyond the last shell decay like p^2 eta^4 ~ p^-6
    tail = float(cnt[-1] * abs(p2[-1] * d2[-1]) * sd.p[-1] / 3) if cnt.size else 0.0
    C_J = fs(list(terms_J.values()))
    C_G = fs(list(terms_G.values()))
    return ConstantsReport(C_G, C_J, terms_G, terms_J, int(math.isqrt(int(sd.s[-1]))), tail)


def shell_shift(sd: ShellData) -> float:
    """(1/2) sum_{p != 0} [-F_p + eps_p] over all shells, with eps_p = sqrt(p^4 + 2 p^2 c_p)."""
    s, g = np.sinh(sd.eta), np.cosh(sd.eta)
    p2 = sd.p**2
    F = p2 * (s * s + g * g) + sd.c * (g + s) ** 2
    G = 2 * p2 * s * g + sd.c * (g + s) ** 2
    eps = np.sqrt(p2 * p2 + 2 * p2 * sd.c)
    return -0.5 * math.fsum((sd.count * G * G / (F + eps)).tolist())


# ----------------------------------------------------------------------------
# depletion

def _depletion_summand(c, p2):
    eps = np.sqrt(p2 * p2 + 2 * p2 * c)
    return c * c / (2 * eps * (p2 + c + eps))


def depletion(a0: float, Lam: float) -> ShellSum:
    """sum_{|p| <= Lam} (p^2 + 8 pi a0 - eps(p)) / (2 eps(p)); the caller divides by N."""
    n_max = _check_cutoff(Lam, "depletion")
    c = 8 * np.pi * a0
    s, cnt, p = _shells(n_max)
    keep = p <= Lam
    val = math.fsum((cnt[keep] * _depletion_summand(c, p[keep] ** 2)).tolist())
    return ShellSum(val, c * c / (8 * np.pi**2 * Lam), Lam)


def depletion_from_coefficients(sd: ShellData, Lam: float) -> ShellSum:
    """sum sinh^2(eta_p + tau_p) = sum [s^2 + (s^2 + g^2) sinh^2 tau + 2 s g sinh tau cosh tau].

    sinh^2 tau and sinh tau cosh tau come from 2 sinh^2 tau = F/eps - 1 and
    2 sinh tau cosh tau = -G/eps.
    """
    keep = sd.p <= Lam
    eta, c, p2, cnt = sd.eta[keep], sd.c[keep], sd.p[keep] ** 2, sd.count[keep]
    s, g = np.sinh(eta), np.cosh(eta)
    F = p2 * (s * s + g * g) + c * (g + s) ** 2
    G = 2 * p2 * s * g + c * (g + s) ** 2
    eps = np.sqrt((F - G) * (F + G))
    sh2 = 0.5 * (G * G / (eps * (F + eps)))  # F/eps - 1 = G^2/(eps (F + eps))
    shch = -0.5 * G / eps
    terms = s * s + (s * s + g * g) * sh2 + 2 * s * g * shch
    val = math.fsum((cnt * terms).tolist())
    tail = float(abs(c[-1]) ** 2 / (8 * np.pi**2 * np.sqrt(p2[-1])))
    return ShellSum(val, tail, float(np.sqrt(p2[-1])))


# ----------------------------------------------------------------------------
# spectrum

@dataclass(frozen=True)
class SpectrumLine:
    nu: float
    multiplicity: int
    occupations: tuple  # ((mode, n), ...) with n > 0

    def pattern(self) -> str:
        return " ".join(f"{m}:{k}" for m, k in self.occupations) or "vacuum"


def _same_line(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-9 * (1 + abs(a))


def _pattern_estimate(eps: np.ndarray, zeta: float) -> float:
    # volume of the simplex {sum n_i eps_i <= zeta}
    K = eps.size
    return float(np.exp(K * np.log(zeta) - math.lgamma(K + 1) - np.sum(np.log(eps))))


def enumerate_spectrum(eps, zeta: float, labels=None, max_patterns: int = 1_000_000) -> list[SpectrumLine]:
    """All eigenvalues nu = sum n_p eps_p <= zeta of the diagonal operator, with multiplicities."""
    op = "enumerate_spectrum"
    eps = np.asarray(eps, dtype=float).ravel()
    if not zeta > 0:
        raise ValidationError(f"zeta must be positive, got {zeta}", _MOD, op)
    if eps.size and (not np.all(np.isfinite(eps)) or np.any(eps <= 0)):
        raise ValidationError("eps entries must be finite and positive", _MOD, op)
    labels = list(range(eps.size)) if labels is None else list(labels)
    order = np.argsort(eps, kind="stable")
    se = eps[order]
    patterns: list[tuple[float, tuple]] = []
    occ = [0] * se.size

    def dfs(i: int, total: float):
        if i == se.size:
            if len(patterns) >= max_patterns:
                est = _pattern_estimate(eps, zeta)
                raise ValidationError(f"more than {max_patterns} occupation patterns (estimate {est:.3g})",
                                      _MOD, op)
            patterns.append((total, tuple((labels[order[j]], occ[j]) for j in range(se.size) if occ[j])))
            return
        k = 0
        t = total
        while t <= zeta:
            occ[i] = k
            dfs(i + 1, t)
            k += 1
            t = total + k * se[i]
        occ[i] = 0

    dfs(0, 0.0)
    patterns.sort(key=lambda x: (x[0], x[1]))
    lines: list[SpectrumLine] = []
    head, count, rep = None, 0, None
    for nu, pat in patterns:
        if head is not None and _same_line(head, nu):
            count += 1
            continue
        if head is not None:
            lines.append(SpectrumLine(head, count, rep))
        head, count, rep = nu, 1, pat
    if head is not None:
        lines.append(SpectrumLine(head, count, rep))
    return lines


def brute_force_spectrum(eps, zeta: float) -> list[tuple[float, int]]:
    """Reference enumeration over the full occupation box n_i <= zeta / eps_i."""
    eps = np.asarray(eps, dtype=float).ravel()
    if eps.size == 0:
        return [(0.0, 1)]
    axes = [np.arange(int(math.floor(zeta / e)) + 1) for e in eps]
    occ = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, eps.size)
    nu = occ @ eps
    vals = np.sort(nu[nu <= zeta])
    out: list[tuple[float, int]] = []
    for v in vals.tolist():
        if out and _same_line(out[-1][0], v):
            out[-1] = (out[-1][0], out[-1][1] + 1)
        else:
            out.append((v, 1))
    return out


def spectrum_to_csv(lines, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["nu", "multiplicity", "occupations"])
        for ln in lines:
            w.writerow([f"{ln.nu:.17g}", ln.multiplicity, ln.pattern()])


def check_gap(form: QuadraticForm) -> None:
    """Warn when F_p < p^2/2 somewhere (lower bound of the diagonal coefficient)."""
    if np.any(form.F < 0.5 * form.p2 * (1 - 1e-12)):
        warnings.warn("F_p < p^2/2 for some p", NumericalWarning)
