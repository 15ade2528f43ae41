"""Truncated noncommutative tori with flat Dirac operator and real structure.

The Hilbert basis is the integer lattice |k|, k in Z^n with |k_j| <= K,
tensored with a spinor space C^2 (n = 2, 3) or C^4 (n = 4). Generators act
as shifts with a phase convention that reproduces
U_i U_j = exp(2 pi i theta_ij) U_j U_i for any antisymmetric theta:

  "weyl": pi(U_i)|k> = exp(i pi sum_j theta_ij k_j) |k + e_i>, with the
          plain real structure J0|k> = |-k> (followed by conjugation);
  "left": pi(U_i)|k> = exp(2 pi i sum_{j<i} theta_ij k_j) |k + e_i>, which
          needs a compensating quadratic phase in J0.

Both conventions pass the same identity suites; that invariance is itself
tested.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .operators import AntilinearOperator, GeometryContext, Letter, SparseOperator

MIN_CUTOFF = 3


def pauli() -> tuple:
    s1 = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    s2 = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
    s3 = np.array([[1, 0], [0, -1]], dtype=np.complex128)
    return s1, s2, s3


@dataclass(frozen=True)
class CliffordBasis4:
    """Selfadjoint generators of Cl(4) in the standard block representation.

    gamma_1..gamma_3 are off-diagonal in the Pauli blocks, gamma_4 is the
    diagonal sign matrix and gamma_5 the product of all four. sixteen_basis
    lists the normalized product basis of the 4x4 matrix algebra: identity,
    gamma_5, the four gammas, the four gamma_5 gamma_i, and the six
    antisymmetrized pair products.
    """

    gammas: tuple
    gamma5: np.ndarray
    sixteen_basis: tuple

    def basis_matrix(self, label: str) -> np.ndarray:
        for lab, mat in self.sixteen_basis:
            if lab == label:
                return mat
        raise KeyError(label)


def clifford4() -> CliffordBasis4:
    s = pauli()
    zero = np.zeros((2, 2), dtype=np.complex128)
    eye2 = np.eye(2, dtype=np.complex128)
    gammas = []
    for j in range(3):
        gammas.append(np.block([[zero, 1j * s[j]], [-1j * s[j], zero]]))
    gammas.append(np.block([[eye2, zero], [zero, -eye2]]))
    g5 = gammas[0] @ gammas[1] @ gammas[2] @ gammas[3]
    basis = [("id", np.eye(4, dtype=np.complex128)), ("g5", g5)]
    for j in range(4):
        basis.append((f"g{j + 1}", gammas[j]))
    for j in range(4):
        basis.append((f"g5g{j + 1}", g5 @ gammas[j]))
    for i in range(4):
        for j in range(i + 1, 4):
            basis.append((f"g{i + 1}g{j + 1}", gammas[i] @ gammas[j]))
    return CliffordBasis4(tuple(gammas), g5, tuple(basis))


def _as_theta_matrix(n: int, theta) -> np.ndarray:
    if np.isscalar(theta):
        if n != 2:
            raise ValueError("scalar theta is only a shorthand for n = 2")
        theta = [[0.0, float(theta)], [-float(theta), 0.0]]
    t = np.asarray(theta, dtype=float)
    if t.shape != (n, n):
        raise ValueError(f"theta must be {n}x{n}, got {t.shape}")
    if np.abs(t + t.T).max() > 1e-12:
        raise ValueError("theta must be antisymmetric")
    return t


class TorusContext(GeometryContext):
    kind = "torus"

    def __init__(self, n: int, theta: np.ndarray, K: int, convention: str):
        super().__init__()
        self.n = n
        self.theta = theta
        self.K = K
        self.convention = convention
        self.kr_dim = n
        self.spinor_dim = 2 if n in (2, 3) else 4
        self.grid = np.array(
            list(itertools.product(range(-K, K + 1), repeat=n)), dtype=np.int64
        )
        self.orbital_dim = self.grid.shape[0]
        self.dim = self.orbital_dim * self.spinor_dim
        self.strides = np.array(
            [(2 * K + 1) ** (n - 1 - j) for j in range(n)], dtype=np.int64
        )
        self.deltas: list = []
        self.gamma_matrices: list = []
        self.clifford = clifford4() if n == 4 else None
        self.spinor_conj = None
        self.basis = [
            (tuple(k), s) for k in self.grid for s in range(self.spinor_dim)
        ]
        self.index = {b: i for i, b in enumerate(self.basis)}

    def params(self) -> dict:
        return {
            "kind": "torus",
            "n": self.n,
            "K": self.K,
            "theta": self.theta.tolist(),
            "convention": self.convention,
            "kr_dim": self.kr_dim,
        }

    def _resolve(self, name: str) -> str:
        if self.n == 2:
            alias = {"U": "U1", "V": "U2", "U*": "U1*", "V*": "U2*"}
            return alias.get(name, name)
        return name

    def _interior_indices(self, margin: int) -> np.ndarray:
        bound = self.K - margin
        if bound < 0:
            return np.array([], dtype=np.intp)
        orb = np.flatnonzero(np.abs(self.grid).max(axis=1) <= bound)
        sd = self.spinor_dim
        return (orb[:, None] * sd + np.arange(sd)[None, :]).ravel().astype(np.intp)

    def spinor_operator(self, mat: np.ndarray) -> SparseOperator:
        """id (orbital) tensor a fixed spinor-factor matrix."""
        return SparseOperator(
            sp.kron(sp.identity(self.orbital_dim, format="csr"), sp.csr_matrix(mat), format="csr")
        )

    def shift_of_word(self, names) -> np.ndarray:
        """Total lattice shift vector of a generator word."""
        shift = np.zeros(self.n, dtype=np.int64)
        for raw in names:
            name = self._resolve(raw)
            axis = int(name.rstrip("*")[1:]) - 1
            shift[axis] += -1 if name.endswith("*") else 1
        return shift

    def shift_clifford(self, names) -> SparseOperator:
        """sum_j s_j gamma^j for the shift vector s of a word."""
        s = self.shift_of_word(names)
        mat = sum(int(s[j]) * self.gamma_matrices[j] for j in range(self.n))
        return self.spinor_operator(np.asarray(mat, dtype=np.complex128))


def _orbital_shift(ctx: TorusContext, axis: int) -> sp.csr_matrix:
    grid, K = ctx.grid, ctx.K
    cols = np.arange(ctx.orbital_dim, dtype=np.int64)
    valid = grid[:, axis] < K
    rows = cols[valid] + ctx.strides[axis]
    if ctx.convention == "weyl":
        phase = np.exp(1j * np.pi * (grid @ ctx.theta[axis]))
    else:
        if axis == 0:
            phase = np.ones(ctx.orbital_dim, dtype=np.complex128)
        else:
            phase = np.exp(
                2j * np.pi * (grid[:, :axis] @ ctx.theta[axis, :axis])
            )
    return sp.csr_matrix(
        (phase[valid], (rows, cols[valid])),
        shape=(ctx.orbital_dim, ctx.orbital_dim),
    )


def _real_structure(ctx: TorusContext) -> AntilinearOperator:
    pos = np.arange(ctx.orbital_dim, dtype=np.int64)
    rev = ctx.orbital_dim - 1 - pos  # position of -k in the lexicographic order
    if ctx.convention == "weyl":
        vals = np.ones(ctx.orbital_dim, dtype=np.complex128)
    else:
        # quadratic compensation so that the conjugated generators still
        # land in the commutant of the left-ordered representation
        upper = np.triu(ctx.theta, 1)
        quad = np.einsum("pi,ij,pj->p", ctx.grid, upper, ctx.grid)
        vals = np.exp(-2j * np.pi * quad)
    j0 = sp.csr_matrix((vals, (rev, pos)), shape=(ctx.orbital_dim,) * 2)
    s1, s2, s3 = pauli()
    if ctx.n in (2, 3):
        conj_block = 1j * s2
    else:
        g = ctx.clifford.gammas
        conj_block = g[3] @ g[1]
    ctx.spinor_conj = conj_block
    return AntilinearOperator(
        SparseOperator(sp.kron(j0, sp.csr_matrix(conj_block), format="csr"))
    )


def build_torus(n: int, theta, K: int, convention: str = "weyl") -> TorusContext:
    """Construct the truncated torus geometry.

    n in {2, 3, 4}; theta antisymmetric n x n (scalar shorthand for n = 2);
    K >= 3. The bundle derivation is always the last one, delta_n.
    """
    if n not in (2, 3, 4):
        raise ValueError(f"torus dimension must be 2, 3 or 4, got {n}")
    if not float(K).is_integer() or int(K) < MIN_CUTOFF:
        raise ValueError(f"cutoff below minimum: K must be an integer >= {MIN_CUTOFF}")
    K = int(K)
    if convention not in ("weyl", "left"):
        raise ValueError(f"unknown phase convention {convention!r}")
    theta = _as_theta_matrix(n, theta)

    ctx = TorusContext(n, theta, K, convention)
    sd = ctx.spinor_dim
    eye_sp = sp.identity(sd, format="csr", dtype=np.complex128)

    s1, s2, s3 = pauli()
    if n == 2:
        ctx.gamma_matrices = [s1, s2]
        gamma_sp = s3
    elif n == 3:
        ctx.gamma_matrices = [s1, s2, s3]
        gamma_sp = None
    else:
        ctx.gamma_matrices = list(ctx.clifford.gammas)
        gamma_sp = ctx.clifford.gamma5

    for i in range(n):
        orb = _orbital_shift(ctx, i)
        op = SparseOperator(sp.kron(orb, eye_sp, format="csr"))
        charge = 1 if i == n - 1 else 0
        ctx.letters[f"U{i + 1}"] = Letter(op, charge)
        ctx.letters[f"U{i + 1}*"] = Letter(op.adjoint(), -charge)

    for i in range(n):
        diag = sp.diags(ctx.grid[:, i].astype(np.complex128), format="csr")
        ctx.deltas.append(SparseOperator(sp.kron(diag, eye_sp, format="csr")))
    ctx.delta = ctx.deltas[n - 1]

    d = sp.csr_matrix((ctx.dim, ctx.dim), dtype=np.complex128)
    for i in range(n):
        diag = sp.diags(ctx.grid[:, i].astype(np.complex128), format="csr")
        d = d + sp.kron(diag, sp.csr_matrix(ctx.gamma_matrices[i]), format="csr")
    ctx.D = SparseOperator(d)

    if gamma_sp is not None:
        ctx.gamma = ctx.spinor_operator(gamma_sp)

    ctx.J = _real_structure(ctx)
    return ctx


def flat_dirac(ctx: TorusContext) -> SparseOperator:
    """The flat Dirac operator of the context (k-diagonal, Hermitian)."""
    return ctx.D
