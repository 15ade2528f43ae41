"""Sparse complex operator algebra over finite indexed bases.

Everything downstream sits on three primitives: SparseOperator (a linear
map stored as a compressed sparse matrix), AntilinearOperator (matrix
followed by entrywise conjugation of coordinates), and InteriorSubspace
(the set of basis vectors far enough from the index cutoff that operator
words of bounded length act without truncation loss).

Identities are always asserted through residual_on_interior: the max norm
of the operator applied to interior basis vectors. Checks on an empty
interior raise instead of passing vacuously.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp

PRUNE_TOL = 1e-15
DEFAULT_TOL = 1e-10

# densifying beyond this is almost certainly a mistake at desk scale
MAX_DENSE_DIM = 25_000


class OperatorShapeError(ValueError):
    """Dimension mismatch between operands."""


class EmptyInteriorError(RuntimeError):
    """The requested interior margin leaves no basis vectors at this cutoff."""


class NonHermitianError(ValueError):
    """Eigensolve requested for an operator that is not selfadjoint."""

    def __init__(self, deviation: float):
        self.deviation = deviation
        super().__init__(
            f"operator is not Hermitian: deviation norm {deviation:.3e}"
        )


def _pruned(mat: sp.csr_matrix) -> sp.csr_matrix:
    mat = sp.csr_matrix(mat, dtype=np.complex128)
    mat.sum_duplicates()
    if mat.nnz:
        mask = np.abs(mat.data) < PRUNE_TOL
        if mask.any():
            mat.data[mask] = 0.0
            mat.eliminate_zeros()
    return mat


class SparseOperator:
    """Immutable complex linear operator on an indexed basis."""

    __slots__ = ("mat",)

    def __init__(self, mat):
        m = _pruned(sp.csr_matrix(mat))
        if m.shape[0] != m.shape[1]:
            raise OperatorShapeError(f"operator must be square, got {m.shape}")
        object.__setattr__(self, "mat", m)

    def __setattr__(self, name, value):
        raise AttributeError("SparseOperator is immutable")

    # ---- constructors -------------------------------------------------

    @classmethod
    def identity(cls, dim: int) -> "SparseOperator":
        return cls(sp.identity(dim, dtype=np.complex128, format="csr"))

    @classmethod
    def zero(cls, dim: int) -> "SparseOperator":
        return cls(sp.csr_matrix((dim, dim), dtype=np.complex128))

    @classmethod
    def from_entries(cls, dim: int, entries: dict) -> "SparseOperator":
        """Build from an associative map (row, col) -> complex value."""
        if not entries:
            return cls.zero(dim)
        rows, cols = zip(*entries.keys())
        vals = np.fromiter(entries.values(), dtype=np.complex128, count=len(entries))
        return cls.from_coo(dim, np.array(rows), np.array(cols), vals)

    @classmethod
    def from_coo(cls, dim, rows, cols, vals) -> "SparseOperator":
        m = sp.coo_matrix(
            (np.asarray(vals, dtype=np.complex128), (rows, cols)), shape=(dim, dim)
        )
        return cls(m.tocsr())

    @classmethod
    def from_dense(cls, arr) -> "SparseOperator":
        return cls(sp.csr_matrix(np.asarray(arr, dtype=np.complex128)))

    @classmethod
    def diagonal(cls, diag) -> "SparseOperator":
        d = np.asarray(diag, dtype=np.complex128)
        return cls(sp.diags(d, format="csr"))

    # ---- basic queries -------------------------------------------------

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def nnz(self) -> int:
        return self.mat.nnz

    def entries(self) -> dict:
        coo = self.mat.tocoo()
        return {(int(r), int(c)): complex(v) for r, c, v in zip(coo.row, coo.col, coo.data)}

    def dense(self) -> np.ndarray:
        return self.mat.toarray()

    def diag(self) -> np.ndarray:
        return self.mat.diagonal()

    # ---- algebra -------------------------------------------------------

    def _check(self, other: "SparseOperator"):
        if self.dim != other.dim:
            raise OperatorShapeError(
                f"dimension mismatch: {self.dim} vs {other.dim}"
            )

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.mat + other.mat)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.mat - other.mat)

    def __neg__(self) -> "SparseOperator":
        return SparseOperator(-self.mat)

    def __mul__(self, scalar) -> "SparseOperator":
        return SparseOperator(self.mat * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.mat @ other.mat)

    def adjoint(self) -> "SparseOperator":
        return SparseOperator(self.mat.conj().T.tocsr())

    def conj_entries(self) -> "SparseOperator":
        """Entrywise complex conjugate without transposition."""
        return SparseOperator(self.mat.conjugate())

    def transpose(self) -> "SparseOperator":
        return SparseOperator(self.mat.T.tocsr())

    # ---- application and norms ------------------------------------------

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.mat @ np.asarray(vec, dtype=np.complex128)

    def columns(self, idx) -> sp.csr_matrix:
        """Raw sparse slice of the selected columns."""
        return self.mat[:, np.asarray(idx, dtype=np.intp)].tocsr()

    def restrict(self, subset) -> "SparseOperator":
        """Compression to the selected coordinates, in induced order."""
        idx = np.asarray(subset, dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= self.dim):
            raise IndexError("restriction subset out of range")
        sub = self.mat[np.ix_(idx, idx)]
        return SparseOperator(sp.csr_matrix(sub))

    def max_abs(self) -> float:
        return float(np.abs(self.mat.data).max()) if self.mat.nnz else 0.0

    def frobenius(self) -> float:
        if not self.mat.nnz:
            return 0.0
        return float(np.sqrt((np.abs(self.mat.data) ** 2).sum()))

    def max_column_norm(self, cols: Optional[Sequence[int]] = None) -> float:
        m = self.mat if cols is None else self.mat[:, np.asarray(cols, dtype=np.intp)]
        if m.nnz == 0:
            return 0.0
        sq = np.asarray(m.multiply(m.conjugate()).sum(axis=0)).ravel().real
        return float(np.sqrt(sq.max()))

    def hermiticity_defect(self) -> float:
        return (self - self.adjoint()).frobenius()

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermiticity_defect() <= tol * max(self.dim, 1)


def commutator(x: SparseOperator, y: SparseOperator) -> SparseOperator:
    """[X, Y] = XY - YX."""
    x._check(y)
    return SparseOperator(x.mat @ y.mat - y.mat @ x.mat)


def anticommutator(x: SparseOperator, y: SparseOperator) -> SparseOperator:
    """{X, Y} = XY + YX, same contract as the commutator."""
    x._check(y)
    return SparseOperator(x.mat @ y.mat + y.mat @ x.mat)


def restrict(x: SparseOperator, subset) -> SparseOperator:
    return x.restrict(subset)


@dataclass(frozen=True)
class InteriorSubspace:
    """Basis vectors safe under operator words of length <= margin."""

    parent_dim: int
    margin: int
    indices: np.ndarray

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def require_nonempty(self):
        if self.indices.size == 0:
            raise EmptyInteriorError(
                f"interior with margin {self.margin} is empty at this cutoff"
            )


def residual_on_interior(x: SparseOperator, interior: InteriorSubspace) -> float:
    """Max over interior basis vectors v of ||Xv|| / ||v||.

    The universal gauge for "is this operator identity zero". Raises on an
    empty interior so that truncation never masquerades as a pass.
    """
    interior.require_nonempty()
    if x.dim != interior.parent_dim:
        raise OperatorShapeError("interior belongs to a different basis")
    return x.max_column_norm(interior.indices)


def hermitian_eigenvalues(x: SparseOperator, tol: float = 1e-12) -> np.ndarray:
    """All eigenvalues, ascending with multiplicity, of a Hermitian operator.

    Densifies; refuses non-Hermitian input with the deviation attached.
    """
    dev = x.hermiticity_defect()
    if dev > tol * max(x.dim, 1):
        raise NonHermitianError(dev)
    if x.dim > MAX_DENSE_DIM:
        raise ValueError(f"dimension {x.dim} too large for dense eigensolve")
    return np.linalg.eigvalsh(x.dense())


def thin_columns(dim: int, idx) -> sp.csr_matrix:
    """Sparse matrix whose columns are the selected standard basis vectors."""
    idx = np.asarray(idx, dtype=np.intp)
    data = np.ones(idx.size, dtype=np.complex128)
    return sp.csr_matrix(
        (data, (idx, np.arange(idx.size))), shape=(dim, idx.size)
    )


def max_column_norm_raw(m) -> float:
    if m.nnz == 0:
        return 0.0
    sq = np.asarray(m.multiply(m.conjugate()).sum(axis=0)).ravel().real
    return float(np.sqrt(sq.max()))


class AntilinearOperator:
    """v -> matrix . conj(v): the carrier for real structures.

    Composition rules used throughout (M is our matrix, X linear, N another
    antilinear matrix):
      (J o X) v   = M conj(X) conj(v)          antilinear, matrix M conj(X)
      (X o J) v   = X M conj(v)                antilinear, matrix X M
      (J1 o J2) v = M1 conj(M2) v              linear
      J X J^-1    = M conj(X) M^dagger         linear, for antiunitary J
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix: SparseOperator):
        self.matrix = matrix if isinstance(matrix, SparseOperator) else SparseOperator(matrix)

    @property
    def dim(self) -> int:
        return self.matrix.dim

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix.mat @ np.conj(np.asarray(vec, dtype=np.complex128))

    def after(self, x: SparseOperator) -> "AntilinearOperator":
        """self o x as an antilinear operator."""
        return AntilinearOperator(SparseOperator(self.matrix.mat @ x.mat.conjugate()))

    def before(self, x: SparseOperator) -> "AntilinearOperator":
        """x o self as an antilinear operator."""
        return AntilinearOperator(x @ self.matrix)

    def square(self) -> SparseOperator:
        """Applying twice is linear: matrix . conj(matrix)."""
        return SparseOperator(self.matrix.mat @ self.matrix.mat.conjugate())

    def inverse(self) -> "AntilinearOperator":
        """Inverse, assuming the matrix is unitary (antiunitary operator)."""
        return AntilinearOperator(self.matrix.transpose())

    def antiunitarity_defect(self) -> float:
        m = self.matrix
        return (m.adjoint() @ m - SparseOperator.identity(m.dim)).max_abs()

    def conjugate(self, x: SparseOperator) -> SparseOperator:
        """J X J^-1 for antiunitary J."""
        m = self.matrix.mat
        return SparseOperator(m @ x.mat.conjugate() @ m.conj().T)

    def conjugate_apply(self, x_raw, cols_raw):
        """(J X J^-1) @ C on a thin sparse slice, without the full product."""
        m = self.matrix.mat
        t = (m.conj().T @ cols_raw).conjugate()
        return (m @ (x_raw @ t).conjugate()).tocsr()

    def sign_defect(self, x: SparseOperator, sign: int) -> SparseOperator:
        """Matrix of J X - sign . X J (an antilinear operator identity)."""
        return SparseOperator(self.matrix.mat @ x.mat.conjugate() - sign * (x.mat @ self.matrix.mat))

    def restrict(self, subset) -> "AntilinearOperator":
        """Compression; only meaningful if J preserves the selected span."""
        return AntilinearOperator(self.matrix.restrict(subset))


class Letter(NamedTuple):
    op: SparseOperator
    charge: int


class GeometryContext:
    """Shared carrier for a truncated geometry.

    Subclasses populate: kind, basis (ordered index tuples), dim, letters
    (generator name -> Letter with its charge under the bundle derivation),
    D, J, delta, optional gamma, kr_dim, and the interior predicate.
    """

    kind: str = "abstract"

    def __init__(self):
        self.basis: list = []
        self.index: dict = {}
        self.dim: int = 0
        self.letters: dict = {}
        self.D: Optional[SparseOperator] = None
        self.J: Optional[AntilinearOperator] = None
        self.delta: Optional[SparseOperator] = None
        self.gamma: Optional[SparseOperator] = None
        self.kr_dim: int = 0
        self._word_cache: dict = {}

    # subclasses override
    def _interior_indices(self, margin: int) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def interior(self, margin: int) -> InteriorSubspace:
        if margin < 0:
            raise ValueError("margin must be nonnegative")
        return InteriorSubspace(self.dim, margin, self._interior_indices(margin))

    def _resolve(self, name: str) -> str:
        return name

    def letter(self, name: str) -> Letter:
        key = self._resolve(name)
        try:
            return self.letters[key]
        except KeyError:
            raise KeyError(f"unknown generator {name!r} for {self.kind}") from None

    def unit(self) -> SparseOperator:
        return SparseOperator.identity(self.dim)

    def word(self, names: Iterable[str]) -> SparseOperator:
        """Product operator of the named generators, left to right."""
        key = tuple(self._resolve(n) for n in names)
        if key not in self._word_cache:
            if not key:
                self._word_cache[key] = self.unit()
            else:
                op = self.letters[key[0]].op
                for n in key[1:]:
                    op = op @ self.letters[n].op
                self._word_cache[key] = op
        return self._word_cache[key]

    def word_charge(self, names: Iterable[str]) -> int:
        return sum(self.letter(n).charge for n in names)

    def words_upto(self, maxlen: int, alphabet: Optional[Sequence[str]] = None) -> list:
        """All generator words of length 1..maxlen (tuples of names)."""
        letters = list(alphabet) if alphabet is not None else list(self.letters)
        out, layer = [], [()]
        for _ in range(maxlen):
            layer = [w + (g,) for w in layer for g in letters]
            out.extend(layer)
        return out

    def word_length(self, names) -> int:
        return len(tuple(names))
