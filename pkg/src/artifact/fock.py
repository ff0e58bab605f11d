"""Truncated Fock space F_+^{<=N} over a finite mode set and exact operator checks.

Basis states are occupation vectors (n_p)_{p in P} with sum n_p <= N, ordered
lexicographically. Operators are scipy CSR matrices; every piece of the
excitation Hamiltonian is normal-ordered, so its restriction to the truncated
space is exact. Terms that would reference momenta outside P are dropped and
counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite
from scipy.linalg import eigh, eigh_tridiagonal, expm
from scipy.sparse.linalg import LinearOperator, eigsh, expm_multiply

from .errors import NonConvergenceError, ValidationError
from .potential import RadialPotential, fourier_hat

_MOD = "fock"
TWO_PI = 2 * np.pi
DENSE_LIMIT = 400


def _key(p) -> tuple:
    return tuple(int(x) for x in p)


def _neg(p) -> tuple:
    return tuple(-int(x) for x in p)


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Occupation-number basis over modes P (integer triples, p = 2 pi n) with particle cap N."""

    modes: tuple
    N: int
    states: np.ndarray
    codes: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def mode_index(self, p) -> int:
        k = _key(p)
        try:
            return self.modes.index(k)
        except ValueError:
            raise ValidationError(f"mode {k} not in P", _MOD, "ladder") from None

    def encode(self, states: np.ndarray) -> np.ndarray:
        base = self.N + 1
        out = np.zeros(states.shape[0], dtype=np.int64)
        for j in range(states.shape[1]):
            out = out * base + states[:, j]
        return out

    def index_of(self, states: np.ndarray) -> np.ndarray:
        """Row indices of the given occupation vectors (-1 where absent)."""
        codes = self.encode(np.atleast_2d(states))
        pos = np.searchsorted(self.codes, codes)
        pos = np.minimum(pos, self.dim - 1)
        return np.where(self.codes[pos] == codes, pos, -1)

    @property
    def number(self) -> np.ndarray:
        return self.states.sum(axis=1)


def basis_dimension(n_modes: int, N: int) -> int:
    return sum(math.comb(k + n_modes - 1, n_modes - 1) for k in range(N + 1))


def build_basis(P, N: int, max_dim: int = 2_000_000) -> FockBasis:
    op = "build_basis"
    modes = tuple(_key(p) for p in P)
    if not modes:
        raise ValidationError("mode set is empty", _MOD, op)
    if len(set(modes)) != len(modes):
        raise ValidationError("mode set has duplicates", _MOD, op)
    if any(m == (0, 0, 0) for m in modes):
        raise ValidationError("the zero mode is not an excitation mode", _MOD, op)
    if any(_neg(m) not in modes for m in modes):
        raise ValidationError("mode set must be closed under p -> -p", _MOD, op)
    if int(N) != N or N < 1:
        raise ValidationError(f"N must be an integer >= 1, got {N}", _MOD, op)
    N = int(N)
    K = len(modes)
    dim = basis_dimension(K, N)
    if dim > max_dim:
        raise ValidationError(f"dimension {dim} exceeds the cap {max_dim}", _MOD, op)
    states = np.empty((dim, K), dtype=np.int64)
    row = 0

    def fill(prefix: list, left: int):
        nonlocal row
        if len(prefix) == K:
            states[row] = prefix
            row += 1
            return
        for n in range(left + 1):
            fill(prefix + [n], left - n)

    fill([], N)
    base = N + 1
    codes = np.zeros(dim, dtype=np.int64)
    for j in range(K):
        codes = codes * base + states[:, j]
    return FockBasis(modes, N, states, codes)


# ----------------------------------------------------------------------------
# ladder operators

def _annihilator(basis: FockBasis, j: int) -> sp.csr_matrix:
    src = np.nonzero(basis.states[:, j] > 0)[0]
    tgt_states = basis.states[src].copy()
    tgt_states[:, j] -= 1
    tgt = basis.index_of(tgt_states)
    vals = np.sqrt(basis.states[src, j].astype(float))
    return sp.csr_matrix((vals, (tgt, src)), shape=(basis.dim, basis.dim))


def ladder(basis: FockBasis, p, kind: str) -> sp.csr_matrix:
    """a_p, a*_p, b_p = sqrt((N - N_+)/N) a_p or b*_p = a*_p sqrt((N - N_+)/N)."""
    if kind not in ("a", "a*", "b", "b*"):
        raise ValidationError(f"unknown ladder kind {kind!r}", _MOD, "ladder")
    j = basis.mode_index(p)
    ck = ("ladder", j, kind)
    if ck in basis._cache:
        return basis._cache[ck]
    a = _annihilator(basis, j)
    if kind == "a":
        out = a
    elif kind == "a*":
        out = a.T.tocsr()
    else:
        # b_p: the N_+ factor acts after annihilation, i.e. on the target state
        fac = sp.diags(np.sqrt((basis.N - basis.number) / basis.N))
        b = (fac @ a).tocsr()
        out = b if kind == "b" else b.T.tocsr()
    basis._cache[ck] = out
    return out


def number_operator(basis: FockBasis) -> sp.csr_matrix:
    return sp.diags(basis.number.astype(float)).tocsr()


def momentum_operator(basis: FockBasis, axis: int) -> sp.csr_matrix:
    """Component ``axis`` of sum_p p a*_p a_p."""
    pj = TWO_PI * np.array([m[axis] for m in basis.modes], dtype=float)
    return sp.diags(basis.states @ pj).tocsr()


def kinetic_operator(basis: FockBasis) -> sp.csr_matrix:
    p2 = TWO_PI**2 * np.array([sum(c * c for c in m) for m in basis.modes], dtype=float)
    return sp.diags(basis.states @ p2).tocsr()


def _mode_values(basis: FockBasis, values, op: str) -> dict:
    if isinstance(values, dict):
        vals = {_key(k): float(v) for k, v in values.items()}
    else:
        arr = np.asarray(values, dtype=float)
        if arr.shape != (basis.n_modes,):
            raise ValidationError("values must be a dict or one value per mode", _MOD, op)
        vals = dict(zip(basis.modes, arr.tolist()))
    missing = [m for m in basis.modes if m not in vals]
    if missing:
        raise ValidationError(f"no value for modes {missing}", _MOD, op)
    return vals


def build_B_eta(basis: FockBasis, eta) -> sp.csr_matrix:
    """B(eta) = (1/2) sum_p (eta_p b*_p b*_{-p} - eta_p b_p b_{-p}) for real symmetric eta."""
    op = "build_B_eta"
    eta = _mode_values(basis, eta, op)
    for m in basis.modes:
        if eta[m] != eta[_neg(m)]:
            raise ValidationError(f"eta is not symmetric at {m}", _MOD, op)
    B = sp.csr_matrix((basis.dim, basis.dim))
    for m in basis.modes:
        if eta[m] == 0.0:
            continue
        cr = ladder(basis, m, "b*") @ ladder(basis, _neg(m), "b*")
        an = ladder(basis, m, "b") @ ladder(basis, _neg(m), "b")
        B = B + 0.5 * eta[m] * (cr - an)
    return B.tocsr()


@dataclass(frozen=True, eq=False)
class CubicGenerator:
    A: sp.csr_matrix
    A_sigma: sp.csr_matrix
    A_gamma: sp.csr_matrix
    dropped: int
    kept: int


def split_modes(basis: FockBasis, threshold: float | None = None) -> tuple[list, list]:
    """(P_H, P_L) with P_L = {|p| <= threshold}; the default threshold is N^(1/2)."""
    thr = math.sqrt(basis.N) if threshold is None else threshold
    low = [m for m in basis.modes if TWO_PI * math.sqrt(sum(c * c for c in m)) <= thr]
    high = [m for m in basis.modes if m not in low]
    return high, low


def build_cubic_A(basis: FockBasis, eta, sigma, gamma, P_H, P_L) -> CubicGenerator:
    """A = N^(-1/2) sum_{r in P_H, v in P_L} eta_r [s_v b*_{r+v} b*_{-r} b*_{-v} + g_v b*_{r+v} b*_{-r} b_v - h.c.]."""
    op = "build_cubic_A"
    eta = _mode_values(basis, eta, op)
    sigma = _mode_values(basis, sigma, op)
    gamma = _mode_values(basis, gamma, op)
    modes = set(basis.modes)
    A_s = sp.csr_matrix((basis.dim, basis.dim))
    A_g = sp.csr_matrix((basis.dim, basis.dim))
    dropped = kept = 0
    for r in map(_key, P_H):
        for v in map(_key, P_L):
            rv = tuple(a + b for a, b in zip(r, v))
            if rv == (0, 0, 0):
                continue
            if rv not in modes or r not in modes or v not in modes:
                dropped += 1
                continue
            kept += 1
            head = ladder(basis, rv, "b*") @ ladder(basis, _neg(r), "b*")
            A_s = A_s + eta[r] * sigma[v] * (head @ ladder(basis, _neg(v), "b*"))
            A_g = A_g + eta[r] * gamma[v] * (head @ ladder(basis, v, "b"))
    scale = 1 / math.sqrt(basis.N)
    A_s = (scale * A_s).tocsr()
    A_g = (scale * A_g).tocsr()
    A = (A_s + A_g - A_s.T - A_g.T).tocsr()
    return CubicGenerator(A, A_s, A_g, dropped, kept)


@dataclass(frozen=True, eq=False)
class ExcitationHamiltonian:
    pieces: dict
    dropped: dict

    @property
    def total(self) -> sp.csr_matrix:
        out = None
        for m in self.pieces.values():
            out = m if out is None else out + m
        return out.tocsr()


def build_L_N(basis: FockBasis, pot: RadialPotential, N: int | None = None) -> ExcitationHamiltonian:
    """L^(0) + L^(2) + L^(3) + L^(4) restricted to the mode set, with dropped-term counts."""
    N = basis.N if N is None else int(N)
    if N != basis.N:
        raise ValidationError("N must equal the basis particle cap", _MOD, "build_L_N")
    modes = basis.modes
    mset = set(modes)
    D = basis.dim
    Np = basis.number.astype(float)

    def vhat(m):
        return float(fourier_hat(pot, TWO_PI * math.sqrt(sum(c * c for c in m)) / N))

    v0 = float(fourier_hat(pot, 0.0))
    # grouped so that the vacuum entry is exactly (N - 1) V_hat(0) / 2
    L0 = sp.diags((N - 1) * v0 / 2 * ((N - Np) / N) + v0 / (2 * N) * Np * (N - Np)).tocsr()

    L2 = kinetic_operator(basis)
    for m in modes:
        vm = vhat(m)
        if vm == 0.0:
            continue
        bb = ladder(basis, m, "b*") @ ladder(basis, m, "b")
        aa = ladder(basis, m, "a*") @ ladder(basis, m, "a")
        pair = ladder(basis, m, "b*") @ ladder(basis, _neg(m), "b*")
        pair = pair + ladder(basis, m, "b") @ ladder(basis, _neg(m), "b")
        L2 = L2 + vm * (bb - aa / N) + 0.5 * vm * pair
    L2 = L2.tocsr()

    L3 = sp.csr_matrix((D, D))
    drop3 = 0
    for p in modes:
        vp = vhat(p)
        for q in modes:
            pq = tuple(a + b for a, b in zip(p, q))
            if pq == (0, 0, 0):
                continue
            if pq not in mset:
                drop3 += 1
                continue
            t = ladder(basis, pq, "b*") @ ladder(basis, _neg(p), "a*") @ ladder(basis, q, "a")
            t = t + ladder(basis, q, "a*") @ ladder(basis, _neg(p), "a") @ ladder(basis, pq, "b")
            L3 = L3 + vp * t
    L3 = (L3 / math.sqrt(N)).tocsr()

    L4 = sp.csr_matrix((D, D))
    drop4 = 0
    zero = (0, 0, 0)
    shifts = sorted({tuple(a - b for a, b in zip(x, y)) for x in modes for y in modes})
    for p in modes:
        for q in modes:
            for r in shifts:
                if r == _neg(p) or r == _neg(q):
                    continue
                pr = tuple(a + b for a, b in zip(p, r))
                qr = tuple(a + b for a, b in zip(q, r))
                if pr not in mset or qr not in mset:
                    if pr != zero and qr != zero:
                        drop4 += 1
                    continue
                vr = vhat(r)
                if vr == 0.0:
                    continue
                t = ladder(basis, pr, "a*") @ ladder(basis, q, "a*") @ ladder(basis, p, "a") @ ladder(basis, qr, "a")
                L4 = L4 + vr * t
    L4 = (L4 / (2 * N)).tocsr()
    return ExcitationHamiltonian({"L0": L0, "L2": L2, "L3": L3, "L4": L4}, {"L3": drop3, "L4": drop4})


# ----------------------------------------------------------------------------
# exponentials and conjugation

def unitary_action(G: sp.spmatrix, sign: float = 1.0):
    """v -> exp(sign * G) v; dense exponential below DENSE_LIMIT, expm_multiply above."""
    if G.shape[0] < DENSE_LIMIT:
        U = expm(sign * G.toarray())
        return lambda v: U @ v
    Gs = (sign * G).tocsc()
    return lambda v: expm_multiply(Gs, v)


def conjugate(H: sp.spmatrix, G: sp.spmatrix, check: bool = True) -> LinearOperator:
    """Action v -> exp(-G) H exp(G) v for anti-hermitian G."""
    if check and G.shape[0] and abs(G + G.conj().T).max() > 1e-12:
        raise ValidationError("generator is not anti-hermitian", _MOD, "conjugate")
    fwd = unitary_action(G, 1.0)
    back = unitary_action(G, -1.0)

    def mv(v):
        v = np.asarray(v).reshape(-1)
        return back(H @ fwd(v))

    n = H.shape[0]
    return LinearOperator((n, n), matvec=mv, dtype=float)


def conjugated_matrix(H: sp.spmatrix, G: sp.spmatrix) -> np.ndarray:
    """Dense exp(-G) H exp(G) for small dimensions."""
    U = expm(G.toarray())
    return U.T.conj() @ H.toarray() @ U


def lanczos_ground(H, dim: int, k: int = 1, tol: float = 1e-9):
    """Lowest k eigenvalues and the ground vector of a hermitian matrix or action."""
    if k < 1 or k > dim:
        raise ValidationError(f"k must lie in [1, {dim}]", _MOD, "lanczos_ground")
    if dim <= 200 or k >= dim - 1:
        M = H.toarray() if sp.issparse(H) else (H @ np.eye(dim) if not isinstance(H, np.ndarray) else H)
        M = 0.5 * (M + M.conj().T)
        w, V = eigh(M)
        return w[:k], V[:, 0]
    v0 = np.random.default_rng(0).standard_normal(dim)  # fixed start vector keeps runs reproducible
    w, V = eigsh(H, k=k, which="SA", tol=tol * 1e-3, maxiter=20 * dim, v0=v0)
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    r = H @ V[:, 0] - w[0] * V[:, 0]
    if np.linalg.norm(r) > 1e-6 * max(1.0, abs(w[0])):
        raise NonConvergenceError(f"ground residual {np.linalg.norm(r):.2e}", _MOD, "lanczos_ground")
    return w, V[:, 0]


def d_p_residual(basis: FockBasis, eta, p, vectors) -> np.ndarray:
    """||(exp(-B) b_p exp(B) - gamma_p b_p - sigma_p b*_{-p}) v|| for each column v."""
    etas = _mode_values(basis, eta, "d_p_residual")
    B = build_B_eta(basis, etas)
    fwd = unitary_action(B, 1.0)
    back = unitary_action(B, -1.0)
    e = etas[_key(p)]
    s, g = math.sinh(e), math.cosh(e)
    b = ladder(basis, p, "b")
    bs = ladder(basis, _neg(p), "b*")
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.shape[0] != basis.dim:
        V = V.T
    out = []
    for j in range(V.shape[1]):
        v = V[:, j]
        lhs = back(b @ fwd(v))
        out.append(float(np.linalg.norm(lhs - g * (b @ v) - s * (bs @ v))))
    return np.array(out)


def state_vector(basis: FockBasis, occupation: dict) -> np.ndarray:
    """Unit vector of a single occupation pattern given as {mode: n}."""
    occ = np.zeros(basis.n_modes, dtype=np.int64)
    for m, n in occupation.items():
        occ[basis.mode_index(m)] = n
    i = int(basis.index_of(occ[None, :])[0])
    if i < 0:
        raise ValidationError(f"occupation {occupation} not in the basis", _MOD, "state_vector")
    v = np.zeros(basis.dim)
    v[i] = 1.0
    return v


# ----------------------------------------------------------------------------
# two-mode Bogoliubov checks

@dataclass(frozen=True)
class BogoliubovCheck:
    F: float
    G: float
    computed: np.ndarray
    expected: np.ndarray
    max_error: float
    cutoff_change: float

    @property
    def shift(self) -> float:
        return float(self.computed[0])

    @property
    def gap(self) -> float:
        return float(self.computed[1] - self.computed[0])


def _two_mode_expected(F: float, G: float, k: int) -> np.ndarray:
    eps = math.sqrt(F * F - G * G)
    levels = []
    n = 0
    while len(levels) < k:
        levels.extend([(eps - F) + eps * n] * (n + 1))
        n += 1
    return np.array(levels[:k])


def _standard_two_mode(F: float, G: float, n_max: int, k: int) -> np.ndarray:
    # blocks of fixed n1 - n2 = d are tridiagonal in n2
    vals = []
    for d in range(-n_max, n_max + 1):
        n2 = np.arange(max(0, -d), n_max + 1 - max(d, 0))
        n1 = n2 + d
        if n2.size == 0:
            continue
        diag = F * (n1 + n2).astype(float)
        off = G * np.sqrt(((n1[:-1] + 1) * (n2[:-1] + 1)).astype(float))
        if n2.size == 1:
            vals.append(diag)
        else:
            vals.append(eigh_tridiagonal(diag, off, eigvals_only=True, select="i",
                                         select_range=(0, min(k, n2.size) - 1)))
    return np.sort(np.concatenate(vals))[:k]


def standard_bogoliubov_check(F: float, G: float, n_max: int = 40, k: int = 6) -> BogoliubovCheck:
    """Exact spectrum of F(a*1 a1 + a*2 a2) + G(a*1 a*2 + a1 a2) with n_i <= n_max, against
    (sqrt(F^2 - G^2) - F) + sqrt(F^2 - G^2)(n1 + n2)."""
    op = "standard_bogoliubov_check"
    if not abs(G) < F:
        raise ValidationError("need |G| < F", _MOD, op)
    if n_max < 20:
        raise ValidationError("n_max must be >= 20", _MOD, op)
    low = _standard_two_mode(F, G, n_max, k)
    high = _standard_two_mode(F, G, 2 * n_max, k)
    change = float(np.max(np.abs(high - low)))
    exp = _two_mode_expected(F, G, k)
    return BogoliubovCheck(F, G, low, exp, float(np.max(np.abs(low - exp))), change)


def generalized_bogoliubov_check(F: float, G: float, N: int, k: int = 6, mode=(1, 0, 0),
                                 occupation_fraction: float = 0.5) -> BogoliubovCheck:
    """The same two-mode Hamiltonian with b-fields on F_+^{<=N} over P = {p, -p}.

    Near N_+ = N the factors sqrt((N - N_+)/N) suppress the energy and create
    eigenvalues with no standard-field counterpart; only eigenvectors with
    <N_+> <= occupation_fraction * N enter the comparison.
    """
    if not abs(G) < F:
        raise ValidationError("need |G| < F", _MOD, "generalized_bogoliubov_check")
    p = _key(mode)
    basis = build_basis([p, _neg(p)], N)
    bp, bm = ladder(basis, p, "b"), ladder(basis, _neg(p), "b")
    bps, bms = ladder(basis, p, "b*"), ladder(basis, _neg(p), "b*")
    H = (F * (bps @ bp + bms @ bm) + G * (bps @ bms + bp @ bm)).tocsr()
    # H conserves n_p - n_{-p}; diagonalize block by block
    diff = basis.states[:, 0] - basis.states[:, 1]
    phys = []
    for d in np.unique(diff):
        idx = np.nonzero(diff == d)[0]
        blk = H[idx][:, idx].toarray()
        w, V = eigh(0.5 * (blk + blk.T))
        occ = (V * V).T @ basis.number[idx]
        phys.extend(w[occ <= occupation_fraction * N].tolist())
    phys = np.sort(np.array(phys))
    if phys.size < k:
        raise NonConvergenceError(f"only {phys.size} low-occupation eigenvalues", _MOD,
                                  "generalized_bogoliubov_check")
    got = phys[:k]
    exp = _two_mode_expected(F, G, k)
    return BogoliubovCheck(F, G, got, exp, float(np.max(np.abs(got - exp))), float("nan"))


def export_matrix_market(M: sp.spmatrix, path, comment: str = "") -> None:
    mmwrite(str(path), sp.coo_matrix(M), comment=comment, precision=17)


def commutator(X, Y):
    return (X @ Y - Y @ X).tocsr() if sp.issparse(X) else X @ Y - Y @ X


def all_modes(P):
    """Deterministic symmetric mode list from representative momenta."""
    out = []
    for p in P:
        for m in (_key(p), _neg(p)):
            if m not in out:
                out.append(m)
    return out


def occupation_patterns(n_modes: int, total: int):
    """All occupation vectors with the given total (used by tests and sweeps)."""
    for occ in product(range(total + 1), repeat=n_modes):
        if sum(occ) == total:
            yield occ
