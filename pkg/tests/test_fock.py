import math
from itertools import product

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from artifact import fock as fk
from artifact.errors import ValidationError
from artifact.potential import fourier_hat, make_soft_sphere

P2 = [(1, 0, 0), (-1, 0, 0), (2, 0, 0), (-2, 0, 0)]


# -- independent dictionary oracle: states are occupation tuples -------------

def _oracle_apply(kind, j, N, state):
    """Return (amplitude, new_state) or None for one ladder operator on a basis state."""
    n = list(state)
    if kind in ("a", "b"):
        if n[j] == 0:
            return None
        amp = math.sqrt(n[j])
        n[j] -= 1
        if kind == "b":
            amp *= math.sqrt((N - sum(n)) / N)
        return amp, tuple(n)
    if sum(n) == N:
        return None
    if kind == "b*":
        amp = math.sqrt((N - sum(n)) / N)
    else:
        amp = 1.0
    n[j] += 1
    return amp * math.sqrt(n[j]), tuple(n)


def _oracle_matrix(basis, kind, j):
    idx = {tuple(map(int, s)): i for i, s in enumerate(basis.states)}
    M = np.zeros((basis.dim, basis.dim))
    for s, i in idx.items():
        out = _oracle_apply(kind, j, basis.N, s)
        if out is not None:
            M[idx[out[1]], i] += out[0]
    return M


@pytest.mark.parametrize("kind", ["a", "a*", "b", "b*"])
def test_ladder_against_dictionary_oracle(kind):
    basis = fk.build_basis(P2, 3)
    for j, m in enumerate(basis.modes):
        np.testing.assert_allclose(fk.ladder(basis, m, kind).toarray(), _oracle_matrix(basis, kind, j), atol=1e-15)


@pytest.mark.parametrize("K,N", [(2, 4), (4, 3), (6, 2)])
def test_basis_dimension(K, N):
    modes = fk.all_modes([(i + 1, 0, 0) for i in range(K // 2)])
    basis = fk.build_basis(modes, N)
    assert basis.dim == fk.basis_dimension(K, N) == math.comb(N + K, K)
    assert np.all(np.diff(basis.codes) > 0)


@pytest.mark.parametrize("P", [[(1, 0, 0)], [(1, 0, 0), (-1, 0, 0), (1, 0, 0)], [(0, 0, 0)], []])
def test_basis_validation(P):
    with pytest.raises(ValidationError, match="fock.build_basis"):
        fk.build_basis(P, 2)


def test_b_commutator_identity():
    N = 3
    basis = fk.build_basis(P2, N)
    eye = np.eye(basis.dim)
    Nplus = np.diag(basis.number.astype(float))
    for p, q in product(basis.modes, repeat=2):
        lhs = fk.commutator(fk.ladder(basis, p, "b"), fk.ladder(basis, q, "b*")).toarray()
        rhs = (eye - Nplus / N) * (p == q) - (fk.ladder(basis, q, "a*") @ fk.ladder(basis, p, "a")).toarray() / N
        assert np.max(np.abs(lhs - rhs)) <= 1e-13


def test_excitation_hamiltonian_structure():
    pot = make_soft_sphere(2.0, 0.25)
    basis = fk.build_basis(P2, 3)
    L = fk.build_L_N(basis, pot)
    H = L.total
    assert abs(H - H.T).max() == 0.0
    assert H[0, 0] == pytest.approx(2 * fourier_hat(pot, 0.0) / 2, rel=1e-15)
    for axis in range(3):
        assert abs(fk.commutator(H, fk.momentum_operator(basis, axis))).max() < 1e-12
    assert L.dropped == {"L3": 6, "L4": 80}


def test_quadratic_piece_vacuum_row():
    # L2 on the vacuum creates pairs (p, -p) with amplitude V_hat(p/N) sqrt((N-1)/N) / 2 per ordering
    pot = make_soft_sphere(2.0, 0.25)
    N = 4
    basis = fk.build_basis([(1, 0, 0), (-1, 0, 0)], N)
    L2 = fk.build_L_N(basis, pot).pieces["L2"].toarray()
    target = fk.state_vector(basis, {(1, 0, 0): 1, (-1, 0, 0): 1})
    vh = fourier_hat(pot, 2 * np.pi / N)
    assert target @ L2[:, 0] == pytest.approx(vh * math.sqrt((N - 1) / N), rel=1e-14)


def test_B_is_antihermitian_and_unitary():
    basis = fk.build_basis(P2, 3)
    B = fk.build_B_eta(basis, {m: -0.1 for m in basis.modes})
    assert abs(B + B.T).max() == 0.0
    U = expm(B.toarray())
    np.testing.assert_allclose(U.T @ U, np.eye(basis.dim), atol=1e-13)


def test_B_requires_symmetric_eta():
    basis = fk.build_basis(P2, 2)
    eta = {m: 0.1 for m in basis.modes}
    eta[(1, 0, 0)] = 0.2
    with pytest.raises(ValidationError, match="symmetric"):
        fk.build_B_eta(basis, eta)


def test_cubic_generator_number_identity():
    basis = fk.build_basis(P2, 3)
    eta = {m: -0.05 for m in basis.modes}
    s, g = math.sinh(-0.05), math.cosh(-0.05)
    high, low = fk.split_modes(basis, threshold=2 * np.pi * 1.5)
    A = fk.build_cubic_A(basis, eta, {m: s for m in basis.modes}, {m: g for m in basis.modes}, high, low)
    assert (A.kept, A.dropped) == (2, 2)
    NA = fk.commutator(fk.number_operator(basis), A.A)
    rhs = 3 * A.A_sigma + A.A_gamma
    assert abs(NA - (rhs + rhs.T)).max() <= 1e-12
    assert abs(A.A + A.A.T).max() == 0.0


def test_unitary_action_dense_and_sparse_agree():
    basis = fk.build_basis(fk.all_modes([(1, 0, 0), (0, 1, 0)]), 9)
    assert basis.dim > fk.DENSE_LIMIT
    B = fk.build_B_eta(basis, {m: -0.1 for m in basis.modes})
    v = np.random.default_rng(0).standard_normal(basis.dim)
    sparse_route = fk.unitary_action(B)(v)
    dense_route = expm(B.toarray()) @ v
    np.testing.assert_allclose(sparse_route, dense_route, atol=1e-12)


@pytest.mark.parametrize("eta", [-0.1, 0.05])
def test_conjugation_matches_nested_commutator_series(eta):
    basis = fk.build_basis([(1, 0, 0), (-1, 0, 0)], 8)
    B = fk.build_B_eta(basis, {m: eta for m in basis.modes}).toarray()
    b = fk.ladder(basis, (1, 0, 0), "b").toarray()
    exact = expm(-B) @ b @ expm(B)
    term, series = b.copy(), b.copy()
    for n in range(1, 25):
        term = (term @ B - B @ term) / n
        series += term
    assert np.max(np.abs(series - exact)) < 1e-8


def test_d_p_residual_vanishes_for_standard_fields_limit():
    # the residual shrinks with N for a fixed low-occupation vector
    res = []
    for N in (10, 40):
        b = fk.build_basis([(1, 0, 0), (-1, 0, 0)], N)
        xi = fk.state_vector(b, {(1, 0, 0): 1})
        res.append(fk.d_p_residual(b, {(1, 0, 0): -0.2, (-1, 0, 0): -0.2}, (1, 0, 0), xi[:, None])[0])
    assert res[1] < res[0] / 2.5


def test_lanczos_ground_matches_dense():
    basis = fk.build_basis(fk.all_modes([(1, 0, 0), (0, 1, 0)]), 5)
    H = fk.build_L_N(basis, make_soft_sphere(2.0, 0.25)).total
    w, v = fk.lanczos_ground(H, basis.dim, 3)
    ref = np.linalg.eigvalsh(H.toarray())[:3]
    np.testing.assert_allclose(w, ref, atol=1e-8)


@given(st.floats(1.0, 10.0), st.floats(-0.9, 0.9))
def test_standard_two_mode_bogoliubov(F, ratio):
    chk = fk.standard_bogoliubov_check(F, ratio * F, 40, 4)
    eps = math.sqrt(F * F - (ratio * F) ** 2)
    assert chk.shift == pytest.approx(eps - F, abs=1e-8)
    if abs(ratio) < 0.8:
        assert chk.max_error < 1e-8


def test_generalized_two_mode_approaches_standard():
    errs = [fk.generalized_bogoliubov_check(5.0, 3.0, N).max_error for N in (20, 80)]
    assert errs[1] < errs[0] / 2.5


def test_matrix_market_roundtrip(tmp_path):
    from scipy.io import mmread
    basis = fk.build_basis(P2, 2)
    H = fk.build_L_N(basis, make_soft_sphere(2.0, 0.25)).total
    fk.export_matrix_market(H, tmp_path / "h.mtx", "test")
    back = sp.csr_matrix(mmread(str(tmp_path / "h.mtx")))
    assert abs(back - H).max() == 0.0
