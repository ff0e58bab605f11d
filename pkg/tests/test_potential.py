import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from artifact.errors import ValidationError
from artifact.potential import (
    ball_moment_hat,
    fourier_hat,
    integral,
    load_tabulated_csv,
    make_soft_sphere,
    make_tabulated,
    radial_integral,
    zero_potential,
)


def _hat_by_quad(pot, k):
    # independent oracle: adaptive quadrature of 4 pi int r^2 V(r) sin(kr)/(kr)
    def f(r):
        return 4 * np.pi * r * r * float(pot(r)) * (np.sinc(k * r / np.pi))
    pts = list(pot.breakpoints[1:-1])
    return quad(f, 0, pot.R, points=pts or None, limit=400, epsabs=0, epsrel=1e-12)[0]


def test_soft_sphere_hat_at_zero_is_volume_times_height():
    pot = make_soft_sphere(3.0, 0.2)
    assert fourier_hat(pot, 0.0) == pytest.approx(3.0 * 4 * np.pi / 3 * 0.2**3, rel=1e-14)
    assert integral(pot) == fourier_hat(pot, 0.0)


@pytest.mark.parametrize("k", [1e-9, 1e-3, 0.7, 5.0, 40.0, 400.0])
def test_soft_sphere_hat_matches_quadrature(k):
    pot = make_soft_sphere(2.0, 0.25)
    assert fourier_hat(pot, k) == pytest.approx(_hat_by_quad(pot, k), rel=1e-9, abs=1e-14)


def test_ball_moment_series_branch_is_continuous():
    x = np.array([0.0999999, 0.1000001, 1e-4, 1e-8])
    exact = (np.sin(x) - x * np.cos(x)) / x**3
    # the closed form loses digits for small x; compare only where it is reliable
    np.testing.assert_allclose(ball_moment_hat(x[:2], 2), exact[:2], rtol=1e-9)
    assert ball_moment_hat(np.array([0.0]), 2)[0] == pytest.approx(1 / 3, rel=1e-15)
    assert ball_moment_hat(np.array([1e-8]), 2)[0] == pytest.approx(1 / 3, rel=1e-12)


def test_tabulated_linear_ramp_against_quadrature():
    pot = make_tabulated([0.0, 0.1, 0.3], [5.0, 2.0, 0.0])
    for k in (0.0, 3.0, 30.0):
        assert fourier_hat(pot, k) == pytest.approx(_hat_by_quad(pot, k), rel=1e-9, abs=1e-13)


def test_tabulated_constant_equals_soft_sphere():
    tab = make_tabulated([0.0, 0.25], [2.0, 2.0])
    ss = make_soft_sphere(2.0, 0.25)
    k = np.linspace(0, 60, 13)
    np.testing.assert_allclose(fourier_hat(tab, k), fourier_hat(ss, k), rtol=1e-10, atol=1e-14)


def test_zero_potential_is_trivial():
    z = zero_potential()
    assert z.is_zero
    assert fourier_hat(z, 3.0) == 0.0
    assert radial_integral(z, np.cos) == 0.0


def test_radial_integral_of_one_is_integral():
    pot = make_soft_sphere(1.5, 0.3)
    assert radial_integral(pot, np.ones_like) == pytest.approx(integral(pot), rel=1e-13)


@pytest.mark.parametrize("v0,R", [(0.0, 0.2), (-1.0, 0.2), (1.0, 0.0), (1.0, 0.5), (math.nan, 0.1)])
def test_soft_sphere_rejects_bad_parameters(v0, R):
    with pytest.raises(ValidationError, match="potential.make_soft_sphere"):
        make_soft_sphere(v0, R)


def test_large_support_needs_opt_in():
    assert make_soft_sphere(2.0, 1.0, allow_large_support=True).R == 1.0


@pytest.mark.parametrize("radii,values", [
    ([0.0, 0.1, 0.1], [1, 1, 0]),
    ([0.0, 0.2], [1, -1]),
    ([0.0, 0.2], [0, 0]),
    ([0.1], [1]),
    ([0.0, 0.6], [1, 0]),
])
def test_tabulated_validation(radii, values):
    with pytest.raises(ValidationError):
        make_tabulated(radii, values)


def test_tabulated_csv_roundtrip(tmp_path):
    p = tmp_path / "v.csv"
    p.write_text("r,v\n0.0,4.0\n0.1,1.0\n0.2,0.0\n")
    pot = load_tabulated_csv(p)
    assert pot.kind == "tabulated" and pot.R == 0.2
    assert float(pot(0.05)) == pytest.approx(2.5)
    bad = tmp_path / "bad.csv"
    bad.write_text("0.0,1.0\nfoo,bar\n")
    with pytest.raises(ValidationError):
        load_tabulated_csv(bad)


@given(st.floats(0.1, 50.0), st.floats(0.01, 0.49), st.floats(0.0, 200.0))
def test_hat_bounded_by_integral(v0, R, k):
    pot = make_soft_sphere(v0, R)
    assert abs(fourier_hat(pot, k)) <= integral(pot) * (1 + 1e-12)


@given(st.floats(0.0, 100.0))
def test_hat_is_even(k):
    pot = make_tabulated([0.0, 0.2, 0.4], [1.0, 3.0, 0.0])
    assert fourier_hat(pot, -k) == fourier_hat(pot, k)
