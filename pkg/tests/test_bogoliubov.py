import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from artifact import bogoliubov as bg
from artifact import scattering as sc
from artifact.errors import ValidationError
from artifact.potential import fourier_hat, zero_potential

TWO_PI = 2 * np.pi


@given(st.floats(-0.3, 0.3))
def test_cancellation_free_remainders(eta):
    with mpmath.workdps(400):
        e = mpmath.mpf(eta)
        sg = float(mpmath.sinh(e) * mpmath.cosh(e) - e)
        s2 = float(mpmath.sinh(e) ** 2 - e**2)
    assert float(bg._sg_minus_eta(eta)) == pytest.approx(sg, rel=1e-12, abs=1e-300)
    assert float(bg._s2_minus_eta2(eta)) == pytest.approx(s2, rel=1e-12, abs=1e-300)


@pytest.fixture(scope="module")
def form_J(weak_table, weak_sphere):
    return bg.quad_coeffs_J(weak_table, weak_sphere, 100)


def test_F_minus_G_and_F_plus_G(form_J):
    s, g, c = form_J.extra["sigma"], form_J.extra["gamma"], form_J.extra["c"]
    p2 = form_J.p2
    np.testing.assert_allclose(form_J.F - form_J.G, p2 * (g - s) ** 2, rtol=1e-12)
    np.testing.assert_allclose(form_J.F + form_J.G, (g + s) ** 2 * (p2 + 2 * c), rtol=1e-12)
    assert form_J.stable
    assert np.all(form_J.F >= 0.5 * p2)


def test_dispersion_is_independent_of_eta(form_J):
    d = bg.diagonalize(form_J)
    c = form_J.extra["c"]
    p2 = form_J.p2
    np.testing.assert_allclose(d.eps, np.sqrt(p2 * p2 + 2 * p2 * c), rtol=1e-12)


def test_convolution_uses_position_space_identity(form_J, weak_solution):
    # c_p = V_hat(p/N) + (1/N) sum_q V_hat((p-q)/N) eta_q; the cube-truncated sum misses a tail
    assert form_J.convolution_truncation < 0.05 * np.max(np.abs(form_J.extra["c"]))


def test_diagonalization_against_symplectic_eigenproblem():
    rng = np.random.default_rng(3)
    for _ in range(20):
        F = rng.uniform(1, 10)
        G = rng.uniform(-0.95, 0.95) * F
        w = np.linalg.eigvals(np.array([[F, G], [-G, -F]]))
        form = bg.QuadraticForm("J", np.array([[1, 0, 0]]), np.array([F]), np.array([G]), 10)
        d = bg.diagonalize(form)
        assert d.eps[0] == pytest.approx(np.max(w.real), rel=1e-12)
        assert d.shift == pytest.approx(0.5 * (d.eps[0] - F), rel=1e-12)
        # (cosh 2 tau, sinh 2 tau) rotate (F, G) onto (eps, 0)
        ch, sh = math.cosh(2 * d.tau[0]), math.sinh(2 * d.tau[0])
        assert F * sh + G * ch == pytest.approx(0.0, abs=1e-12 * F)


def test_diagonalize_rejects_unstable_pair():
    form = bg.QuadraticForm("J", np.array([[1, 0, 0]]), np.array([1.0]), np.array([1.0]), 10)
    with pytest.raises(ValidationError, match=r"\(1, 0, 0\)"):
        bg.diagonalize(form)


def test_zero_potential_form(weak_solution):
    table = sc.eta_coefficients(sc.solve_neumann(zero_potential(), 10, 0.2), 3)
    form = bg.quad_coeffs_J(table, zero_potential(), 10)
    np.testing.assert_allclose(form.F, form.p2)
    np.testing.assert_array_equal(form.G, 0.0)


def test_G_form_shares_small_momentum_limit(weak_table, weak_sphere, form_J):
    # Phi carries no free kinetic energy; p^2 + Phi is the diagonal coefficient
    Gf = bg.quad_coeffs_G(weak_table, weak_sphere, 100)
    full = bg.QuadraticForm("G", Gf.n, Gf.p2 + Gf.F, Gf.G, 100)
    assert full.stable
    low = np.max(np.abs(Gf.n), axis=1) <= 1
    eps_G = bg.diagonalize(full).eps[low]
    eps_J = bg.diagonalize(form_J).eps[low]
    np.testing.assert_allclose(eps_G, eps_J, rtol=5e-3)


@given(st.floats(1e-4, 0.05), st.floats(1.0, 1e3))
def test_dispersion_limit_shape(a0, p):
    e = bg.dispersion_limit(a0, p)
    assert e >= p * p
    assert e == pytest.approx(math.sqrt(p**4 + 16 * math.pi * a0 * p**2), rel=1e-14)


def test_ebog_stable_summand_against_naive_sum():
    a0, Lam = 0.01, TWO_PI * 20
    c = 8 * np.pi * a0
    s, cnt, p = bg._shells(20)
    keep = p <= Lam
    p2 = p[keep] ** 2
    eps = np.sqrt(p2 * p2 + 2 * p2 * c)
    with mpmath.workdps(30):
        naive = mpmath.fsum(mpmath.mpf(float(k)) * 0.5 * (mpmath.sqrt(mpmath.mpf(q) ** 2 + 2 * q * c) - q - c
                                                           + c * c / (2 * mpmath.mpf(q)))
                            for k, q in zip(cnt[keep], p2))
    assert bg.ebog(a0, Lam).value == pytest.approx(float(naive), rel=1e-10)
    assert np.all(eps > 0)


def test_ebog_tail_estimate():
    a0 = 0.01
    lo, hi = bg.ebog(a0, TWO_PI * 20), bg.ebog(a0, TWO_PI * 80)
    gap = hi.value - lo.value
    assert gap == pytest.approx(lo.tail - hi.tail, rel=0.1)


def test_ebog_requires_cutoff():
    with pytest.raises(ValidationError):
        bg.ebog(0.01, 10.0)


def test_ground_state_energy_zero():
    rep = bg.ground_state_energy(10, 0.0, 35.0, TWO_PI * 20)
    assert rep.value == 0.0


def test_depletion_summand_identity():
    a0 = 0.02
    c = 8 * np.pi * a0
    p2 = TWO_PI**2 * np.array([1.0, 2.0, 3.0])
    eps = np.sqrt(p2 * p2 + 2 * p2 * c)
    np.testing.assert_allclose(bg._depletion_summand(c, p2), (p2 + c - eps) / (2 * eps), rtol=1e-9)


def test_depletion_routes_agree(weak_solution):
    sd = bg.shell_data(weak_solution, 40)
    Lam = TWO_PI * 40
    lim = bg.depletion(weak_solution.a0, Lam).value
    coef = bg.depletion_from_coefficients(sd, Lam).value
    assert coef == pytest.approx(lim, rel=1e-2)


def test_shell_shift_matches_diagonalization(form_J, weak_solution):
    # on the table cube both routes sum the same terms
    sd = bg.shell_data(weak_solution, 8)
    inner = sd.s <= 64
    d = bg.diagonalize(form_J)
    cube = np.max(np.abs(form_J.n), axis=1) <= 8
    ball = np.sum(form_J.n**2, axis=1) <= 64
    G, F = form_J.G[cube & ball], form_J.F[cube & ball]
    direct = -0.5 * math.fsum((G * G / (F + d.eps[cube & ball])).tolist())
    sub = bg.ShellData(*(getattr(sd, k)[inner] for k in ("s", "count", "p", "eta", "c", "u", "vhat")), sd.N)
    assert bg.shell_shift(sub) == pytest.approx(direct, rel=1e-9)


def test_position_space_lattice_sums(weak_sphere):
    # sum p^2 eta^2 = N int |grad w|^2 and sum V_hat(p/N) eta_p = -N int V w
    sol = sc.solve_neumann(weak_sphere, 20, 0.25)
    sd = bg.shell_data(sol, 96)
    mom = sc.radial_moments(sol)
    eta0 = sc.eta_coefficients(sol, 1).eta0
    kin = np.sum(sd.count * sd.p**2 * sd.eta**2)
    assert kin == pytest.approx(20 * mom["int_gradw2"], rel=2e-3)
    lin = fourier_hat(weak_sphere, 0.0) * eta0 + np.sum(sd.count * sd.vhat * sd.eta)
    assert lin == pytest.approx(-20 * mom["int_Vw"], rel=2e-3)


def test_constants_track_energy_formula(weak_table, weak_sphere, weak_solution):
    from artifact.lattice import e_lambda
    el = e_lambda(60)
    sd = bg.shell_data(weak_solution, 96)
    C = bg.constants(weak_table, weak_sphere, 100, shells=sd)
    a0 = weak_solution.a0
    eb = bg.ebog_N(weak_solution)
    formula = 4 * np.pi * 99 * a0 + el.e_lambda_4 * a0**2 + bg.ebog(a0, eb.cutoff).value
    assert abs(C.C_J + bg.shell_shift(sd) - formula) < 0.1 * el.e_lambda_4 * a0**2
    assert C.terms_J["leading"] == pytest.approx(99 / 2 * fourier_hat(weak_sphere, 0.0))
    assert C.remainder_tail < 1e-12


def test_constants_zero_potential():
    table = sc.eta_coefficients(sc.solve_neumann(zero_potential(), 10, 0.2), 2)
    C = bg.constants(table, zero_potential(), 10)
    assert C.C_J == 0.0 and C.C_G == 0.0


# ----------------------------------------------------------------------------
# spectrum

def test_spectrum_vacuum_only_below_gap():
    lines = bg.enumerate_spectrum([3.0, 4.0], 2.0)
    assert [(ln.nu, ln.multiplicity) for ln in lines] == [(0.0, 1)]


def test_spectrum_small_example():
    lines = bg.enumerate_spectrum([1.0, 1.0, 2.5], 3.0, ["a", "b", "c"])
    got = [(ln.nu, ln.multiplicity) for ln in lines]
    assert got == [(0.0, 1), (1.0, 2), (2.0, 3), (2.5, 1), (3.0, 4)]
    assert lines[1].pattern() in ("a:1", "b:1")


@given(st.lists(st.floats(0.5, 5.0), min_size=1, max_size=5), st.floats(0.1, 6.0))
def test_spectrum_matches_brute_force(eps, factor):
    zeta = factor * min(eps)
    got = [(ln.nu, ln.multiplicity) for ln in bg.enumerate_spectrum(eps, zeta)]
    ref = bg.brute_force_spectrum(eps, zeta)
    assert [m for _, m in got] == [m for _, m in ref]
    np.testing.assert_allclose([v for v, _ in got], [v for v, _ in ref], rtol=1e-12)


def test_spectrum_guards():
    with pytest.raises(ValidationError):
        bg.enumerate_spectrum([1.0, -1.0], 3.0)
    with pytest.raises(ValidationError):
        bg.enumerate_spectrum([1.0], 0.0)
    with pytest.raises(ValidationError, match="occupation patterns"):
        bg.enumerate_spectrum(np.full(8, 0.1), 5.0, max_patterns=1000)


def test_spectrum_csv(tmp_path):
    bg.spectrum_to_csv(bg.enumerate_spectrum([1.0, 2.0], 2.0), tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "nu,multiplicity,occupations"
    assert rows[1] == "0,1,vacuum"
    assert rows[-1].startswith("2,2,")
