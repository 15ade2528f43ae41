"""Axiom checks for truncated real spectral triples.

Every check follows the same pattern: build the operator that an identity
says should vanish, measure it on an interior subspace wide enough that
index truncation cannot leak in, and record the residual against a
tolerance. Reports aggregate the records; nothing is ever asserted on an
empty interior.

The sign table for the real-structure constants is stored twice on
purpose: compiled into this module and as a packaged JSON data file. A
test pins the two byte-identically, so a silent edit of either copy
fails loudly.
"""

from __future__ import annotations

import importlib.resources
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .operators import (
    AntilinearOperator,
    GeometryContext,
    SparseOperator,
    anticommutator,
    commutator,
    hermitian_eigenvalues,
    max_column_norm_raw,
    residual_on_interior,
    thin_columns,
)
from .report import VerificationReport, canonical_json

DEFAULT_TOL = 1e-10


class KRSignRow(NamedTuple):
    j: int
    eps: int
    eps_prime: int
    eps_double_prime: Optional[int]  # None for odd j
    variant: str


# Signs (eps, eps', eps'') of the real-structure constants by dimension
# mod 8. The even rows come in two self-consistent conventions; the
# primary block is the one all geometries here are checked against, the
# alternative block is carried for completeness.
_EVEN_PRIMARY = {0: (1, 1, 1), 2: (-1, 1, -1), 4: (-1, 1, 1), 6: (1, 1, -1)}
_EVEN_ALTERNATIVE = {0: (1, -1, 1), 2: (1, -1, -1), 4: (-1, -1, 1), 6: (-1, -1, -1)}
_ODD = {1: (1, -1), 3: (-1, 1), 5: (-1, -1), 7: (1, 1)}


def kr_signs(j: int, variant: str = "primary") -> KRSignRow:
    """Sign row for KR-dimension j (mod 8)."""
    if variant not in ("primary", "alternative"):
        raise ValueError(f"unknown sign-table variant {variant!r}")
    jj = int(j) % 8
    if jj % 2 == 0:
        table = _EVEN_PRIMARY if variant == "primary" else _EVEN_ALTERNATIVE
        e, ep, epp = table[jj]
        return KRSignRow(jj, e, ep, epp, variant)
    if variant == "alternative":
        raise ValueError("alternative sign block only covers even dimensions")
    e, ep = _ODD[jj]
    return KRSignRow(jj, e, ep, None, variant)


def kr_table_dict() -> dict:
    """The full compiled table in its serializable shape."""
    return {
        "even": {
            "primary": {str(j): list(v) for j, v in _EVEN_PRIMARY.items()},
            "alternative": {str(j): list(v) for j, v in _EVEN_ALTERNATIVE.items()},
        },
        "odd": {str(j): list(v) for j, v in _ODD.items()},
    }


def kr_table_compiled_json() -> str:
    return canonical_json(kr_table_dict())


def kr_table_packaged_json() -> str:
    """The second, config-loaded copy of the sign table."""
    res = importlib.resources.files("nctriples").joinpath("data/kr_table.json")
    return res.read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# real spectral triple axioms


def _conj_thin(m, mH, x_raw, cols):
    """(J X J^-1) @ cols for antiunitary J with matrix m, thin sparse cols."""
    t = (mH @ cols).conjugate()
    return (m @ (x_raw @ t).conjugate()).tocsr()


def check_real_triple(
    ctx: GeometryContext,
    tol: float = DEFAULT_TOL,
    word_len: int = 2,
    variant: str = "primary",
    real_structure: Optional[AntilinearOperator] = None,
) -> VerificationReport:
    """Antiunitarity, the three sign identities, grading axioms, order zero.

    The order-zero residual is the worst case of [pi(w1), J pi(w2) J^-1]
    over all ordered pairs of generator words up to word_len, measured on
    the interior with margin 2*word_len.
    """
    J = real_structure if real_structure is not None else ctx.J
    if J is None:
        raise ValueError("context has no real structure")
    row = kr_signs(ctx.kr_dim, variant)
    even = row.eps_double_prime is not None
    if even and ctx.gamma is None:
        raise ValueError(f"KR dimension {ctx.kr_dim} is even but no grading is present")

    rep = VerificationReport(ctx.kind, ctx.params())
    ident = SparseOperator.identity(ctx.dim)
    rep.add("real_structure_antiunitary", J.antiunitarity_defect(), tol)
    rep.add("real_structure_squared", (J.square() - row.eps * ident).max_abs(), tol)
    rep.add("dirac_commutation_sign", J.sign_defect(ctx.D, row.eps_prime).max_abs(), tol)
    rep.add("dirac_selfadjoint", (ctx.D - ctx.D.adjoint()).max_abs(), tol)
    if even:
        g = ctx.gamma
        rep.add("grading_commutation_sign", J.sign_defect(g, row.eps_double_prime).max_abs(), tol)
        rep.add("grading_squared", (g @ g - ident).max_abs(), tol)
        rep.add("grading_selfadjoint", (g - g.adjoint()).max_abs(), tol)
        rep.add("grading_anticommutes_dirac", anticommutator(g, ctx.D).max_abs(), tol)

    margin = 2 * word_len
    interior = ctx.interior(margin)
    interior.require_nonempty()
    rep.add("order_zero", _order_zero_residual(ctx, J, word_len, interior), tol, margin)
    return rep


def _order_zero_residual(ctx, J, word_len, interior) -> float:
    m = J.matrix.mat
    mH = m.conj().T
    cols = thin_columns(ctx.dim, interior.indices)
    t0 = (mH @ cols).conjugate().tocsr()
    words = ctx.words_upto(word_len)
    left = []
    for w in words:
        a_raw = ctx.word(w).mat
        a_cols = (a_raw @ cols).tocsr()
        left.append((a_raw, (mH @ a_cols).conjugate().tocsr()))
    worst = 0.0
    for w2 in words:
        b_raw = ctx.word(w2).mat
        conj_cols = (m @ (b_raw @ t0).conjugate()).tocsr()
        for a_raw, t_ac in left:
            direct = a_raw @ conj_cols
            swapped = m @ ((b_raw @ t_ac).conjugate())
            worst = max(worst, max_column_norm_raw((direct - swapped).tocsr()))
    return worst


def check_first_order(
    ctx: GeometryContext, word_len: int = 2, tol: float = DEFAULT_TOL
) -> VerificationReport:
    """[[D, pi(w1)], J pi(w2) J^-1] over all ordered word pairs.

    Also checks the symmetric companion [[D, J pi(w2) J^-1], pi(w1)].
    Requires interior margin 2*word_len + 1; raises if that is empty.
    """
    if ctx.J is None:
        raise ValueError("context has no real structure")
    margin = 2 * word_len + 1
    interior = ctx.interior(margin)
    interior.require_nonempty()

    m = ctx.J.matrix.mat
    mH = m.conj().T
    d_raw = ctx.D.mat
    cols = thin_columns(ctx.dim, interior.indices)
    t0 = (mH @ cols).conjugate().tocsr()
    d_cols = (d_raw @ cols).tocsr()
    t_dc = (mH @ d_cols).conjugate().tocsr()
    words = ctx.words_upto(word_len)

    left = []
    for w in words:
        a_raw = ctx.word(w).mat
        a_c = (a_raw @ cols).tocsr()
        d_a_c = (d_raw @ a_c).tocsr()
        f_c = (d_a_c - a_raw @ d_cols).tocsr()  # [D, A] on the interior columns
        left.append(
            (
                a_raw,
                f_c,
                (mH @ f_c).conjugate().tocsr(),
                (mH @ a_c).conjugate().tocsr(),
                (mH @ d_a_c).conjugate().tocsr(),
            )
        )

    worst = 0.0
    worst_sym = 0.0
    for w2 in words:
        b_raw = ctx.word(w2).mat
        bt_c = (m @ (b_raw @ t0).conjugate()).tocsr()
        d_bt_c = (d_raw @ bt_c).tocsr()
        bt_dc = (m @ (b_raw @ t_dc).conjugate()).tocsr()
        for a_raw, f_c, t_fc, t_ac, t_dac in left:
            f_bt_c = d_raw @ (a_raw @ bt_c) - a_raw @ d_bt_c
            bt_f_c = m @ ((b_raw @ t_fc).conjugate())
            worst = max(worst, max_column_norm_raw((f_bt_c - bt_f_c).tocsr()))
            bt_a_c = m @ ((b_raw @ t_ac).conjugate())
            bt_d_a_c = m @ ((b_raw @ t_dac).conjugate())
            sym = d_raw @ bt_a_c - bt_d_a_c - a_raw @ d_bt_c + a_raw @ bt_dc
            worst_sym = max(worst_sym, max_column_norm_raw(sym.tocsr()))

    rep = VerificationReport(ctx.kind, ctx.params())
    rep.add("first_order", worst, tol, margin)
    rep.add("first_order_symmetric", worst_sym, tol, margin)
    return rep


# ---------------------------------------------------------------------------
# charge structure


def charge_vector(ctx: GeometryContext, tol: float = 1e-12) -> np.ndarray:
    """Integer charge of every basis vector, from the diagonal of delta."""
    if ctx.delta is None:
        raise ValueError("context has no charge operator")
    offdiag = (ctx.delta - SparseOperator.diagonal(ctx.delta.diag())).max_abs()
    if offdiag > tol:
        raise ValueError(f"charge operator is not diagonal (defect {offdiag:.3e})")
    d = ctx.delta.diag()
    if np.abs(d.imag).max(initial=0.0) > tol:
        raise ValueError("charge operator has a non-real eigenvalue")
    rounded = np.round(d.real)
    worst = float(np.abs(d.real - rounded).max(initial=0.0))
    if worst > tol:
        raise ValueError(f"non-integer charge eigenvalue (defect {worst:.3e})")
    return rounded.astype(np.int64)


def _rule_defect(mat, kvec, shift: int) -> float:
    """Largest entry violating kvec[row] = kvec[col] + shift."""
    coo = mat.tocoo()
    if coo.nnz == 0:
        return 0.0
    bad = kvec[coo.row] != kvec[coo.col] + shift
    return float(np.abs(coo.data[bad]).max()) if bad.any() else 0.0


def _flip_defect(mat, kvec) -> float:
    coo = mat.tocoo()
    if coo.nnz == 0:
        return 0.0
    bad = kvec[coo.row] != -kvec[coo.col]
    return float(np.abs(coo.data[bad]).max()) if bad.any() else 0.0


def charge_block_report(ctx: GeometryContext, tol: float = 1e-12) -> VerificationReport:
    kvec = charge_vector(ctx, tol)
    rep = VerificationReport(ctx.kind, ctx.params())
    rep.add("dirac_preserves_charge", _rule_defect(ctx.D.mat, kvec, 0), tol)
    if ctx.J is not None:
        rep.add("real_structure_reverses_charge", _flip_defect(ctx.J.matrix.mat, kvec), tol)
    if ctx.gamma is not None:
        rep.add("grading_preserves_charge", _rule_defect(ctx.gamma.mat, kvec, 0), tol)
    worst = 0.0
    for name, letter in ctx.letters.items():
        worst = max(worst, _rule_defect(letter.op.mat, kvec, letter.charge))
    rep.add("generators_shift_charge", worst, tol)
    return rep


def charge_decomposition(ctx: GeometryContext, tol: float = 1e-12):
    """Partition of the basis by charge, as a sorted list of (k, indices).

    Fails hard if the Dirac operator, real structure, or generator words
    do not respect the block structure; a decomposition that the
    operators ignore would be meaningless downstream.
    """
    rep = charge_block_report(ctx, tol)
    if not rep.passed:
        bad = [c.name for c in rep.checks if not c.passed]
        raise ValueError(f"charge blocks not respected by: {', '.join(bad)}")
    kvec = charge_vector(ctx, tol)
    return [
        (int(k), np.flatnonzero(kvec == k).astype(np.intp))
        for k in sorted(set(kvec.tolist()))
    ]


def check_equivariance(
    ctx: GeometryContext, tol: float = DEFAULT_TOL, phase_angle: float = np.pi / 3
) -> VerificationReport:
    """Circle-action bookkeeping: delta generates a symmetry of the triple."""
    kvec = charge_vector(ctx)
    rep = VerificationReport(ctx.kind, ctx.params())
    rep.add("charge_selfadjoint", (ctx.delta - ctx.delta.adjoint()).max_abs(), tol)
    rep.add("dirac_commutes_with_charge", commutator(ctx.D, ctx.delta).max_abs(), tol)
    rep.add(
        "real_structure_anticommutes_charge",
        ctx.J.sign_defect(ctx.delta, -1).max_abs(),
        tol,
    )
    if ctx.gamma is not None:
        rep.add("grading_commutes_with_charge", commutator(ctx.gamma, ctx.delta).max_abs(), tol)
    # one-parameter rotation acts on each generator by its charge phase
    u = SparseOperator.diagonal(np.exp(1j * phase_angle * kvec))
    u_inv = SparseOperator.diagonal(np.exp(-1j * phase_angle * kvec))
    worst = 0.0
    for name, letter in ctx.letters.items():
        rotated = u @ letter.op @ u_inv
        expected = complex(np.exp(1j * phase_angle * letter.charge)) * letter.op
        worst = max(worst, (rotated - expected).max_abs())
    rep.add("rotation_scales_generators", worst, tol)
    return rep


# ---------------------------------------------------------------------------
# vertical calculus compatibility


def default_presentations(ctx: GeometryContext, word_len: int = 2, count: int = 100, seed: int = 20240817):
    """Sampled presentations sum_i c_i pi(p_i) [D, pi(q_i)].

    All ordered word pairs up to word_len as single-term presentations,
    plus `count` seeded three-term random complex combinations.
    """
    words = ctx.words_upto(word_len)
    out = [((1.0, p, q),) for p in words for q in words]
    rng = np.random.default_rng(seed)
    nw = len(words)
    for _ in range(count):
        terms = []
        for _ in range(3):
            coef = complex(rng.standard_normal(), rng.standard_normal())
            terms.append((coef, words[rng.integers(nw)], words[rng.integers(nw)]))
        out.append(tuple(terms))
    return out


def null_presentations(ctx: GeometryContext):
    """Presentations whose operator value is exactly zero on the interior."""
    out = [((1.0, (), ()),)]
    if ctx.kind == "torus":
        # unitarity pairing: pi(g*)[D, pi(g)] + pi(g)[D, pi(g*)] = 0
        for i in range(1, ctx.n + 1):
            g, gs = f"U{i}", f"U{i}*"
            out.append(((1.0, (gs,), (g,)), (1.0, (g,), (gs,))))
        # defining relations: U_i U_j - e^{2 pi i theta_ij} U_j U_i = 0
        for i in range(ctx.n):
            for j in range(i + 1, ctx.n):
                mu = complex(np.exp(2j * np.pi * ctx.theta[i, j]))
                gi, gj = f"U{i + 1}", f"U{j + 1}"
                out.append(((1.0, (), (gi, gj)), (-mu, (), (gj, gi))))
    elif ctx.kind == "sphere":
        out.append(((1.0, (), ("a", "b")), (-ctx.lam, (), ("b", "a"))))
        out.append(((1.0, (), ("a", "b*")), (-np.conj(ctx.lam), (), ("b*", "a"))))
    return out


def check_calculus_compatibility(
    ctx: GeometryContext,
    presentations=None,
    gamma: Optional[SparseOperator] = None,
    vertical_coefficient: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    seed: int = 20240817,
) -> VerificationReport:
    """Anticommutator extraction of the vertical part of a presentation.

    For rho = sum_i c_i pi(p_i) [D, pi(q_i)], the operator
    (1/(2c)) {Gamma, rho} must equal sum_i c_i pi(p_i) [delta, pi(q_i)],
    with c the vertical coefficient of the geometry. In particular any
    presentation with rho = 0 has vanishing vertical part.
    """
    if gamma is None:
        from .projection import canonical_gamma

        gamma = canonical_gamma(ctx)
    if gamma is None:
        raise ValueError("no grading available for the vertical extraction")
    if vertical_coefficient is None:
        vertical_coefficient = ctx.r / 2.0 if ctx.kind == "sphere" else 1.0
    c = float(vertical_coefficient)

    if presentations is None:
        presentations = default_presentations(ctx, seed=seed)
    nulls = null_presentations(ctx)

    def term_ops(pres):
        rho = SparseOperator.zero(ctx.dim)
        vert = SparseOperator.zero(ctx.dim)
        span = 1
        for coef, p, q in pres:
            pw = ctx.word(p)
            qw = ctx.word(q)
            rho = rho + complex(coef) * (pw @ commutator(ctx.D, qw))
            vert = vert + complex(coef) * (pw @ commutator(ctx.delta, qw))
            span = max(span, len(p) + len(q) + 1)
        return rho, vert, span

    interiors = {}

    def interior_for(margin):
        if margin not in interiors:
            sub = ctx.interior(margin)
            sub.require_nonempty()
            interiors[margin] = sub
        return interiors[margin]

    worst = 0.0
    margin_used = 0
    for pres in presentations:
        rho, vert, span = term_ops(pres)
        extracted = (1.0 / (2.0 * c)) * anticommutator(gamma, rho)
        sub = interior_for(span)
        worst = max(worst, residual_on_interior(extracted - vert, sub))
        margin_used = max(margin_used, span)

    worst_null = 0.0
    for pres in nulls:
        rho, _, span = term_ops(pres)
        sub = interior_for(span)
        rho_res = residual_on_interior(rho, sub)
        vert_res = residual_on_interior(anticommutator(gamma, rho), sub) / (2.0 * c)
        worst_null = max(worst_null, rho_res, vert_res)

    rep = VerificationReport(ctx.kind, ctx.params())
    rep.add("vertical_extraction", worst, tol, margin_used)
    rep.add("null_presentation_vertical", worst_null, tol)
    return rep


# ---------------------------------------------------------------------------
# mutation and stability utilities


def perturb_operator(
    x: SparseOperator, indices, seed: int = 0, eps: float = 1e-3
) -> SparseOperator:
    """Copy of x with eps added on one random entry inside the given block."""
    idx = np.asarray(indices, dtype=np.intp)
    rng = np.random.default_rng(seed)
    r = int(idx[rng.integers(idx.size)])
    c = int(idx[rng.integers(idx.size)])
    bump = SparseOperator.from_coo(x.dim, [r], [c], [eps])
    return x + bump


def flip_real_structure(
    J: AntilinearOperator, basis_index: int
) -> AntilinearOperator:
    """J with the sign flipped on a single basis vector (a broken commutant)."""
    diag = np.ones(J.dim, dtype=np.complex128)
    diag[basis_index] = -1.0
    return AntilinearOperator(J.matrix @ SparseOperator.diagonal(diag))


def bounded_commutator_band(
    ctx_small: GeometryContext,
    ctx_large: GeometryContext,
    words: Optional[Sequence] = None,
    factor: float = 2.0,
) -> VerificationReport:
    """Cutoff stability of ||[D, pi(w)]|| in place of the boundedness axiom.

    Informational: the finite truncation cannot express boundedness, but
    the commutator norms should sit in a narrow band across cutoffs.
    """
    if words is None:
        words = [(name,) for name in ctx_small.letters]
    rep = VerificationReport(ctx_small.kind, ctx_small.params())
    for w in words:
        norms = []
        for ctx in (ctx_small, ctx_large):
            sub = ctx.interior(len(w) + 1)
            sub.require_nonempty()
            norms.append(
                commutator(ctx.D, ctx.word(w)).max_column_norm(sub.indices)
            )
        ratio = norms[1] / norms[0] if norms[0] > 0 else np.inf
        rep.add_info(
            "commutator_norm_band_" + "_".join(w).replace("*", "s"),
            abs(float(np.log2(ratio))),
            float(np.log2(factor)),
        )
    return rep


def eigenvalue_count_growth(
    contexts: Sequence[GeometryContext], radius: float
) -> VerificationReport:
    """Growth rate of #{eigenvalues of D in [-radius, radius]} with cutoff.

    Informational stand-in for compact resolvent: counts should grow no
    faster than a polynomial of degree the KR dimension.
    """
    if len(contexts) < 2:
        raise ValueError("need at least two cutoffs to measure growth")

    def size(ctx):
        p = ctx.params()
        return float(p["K"]) if "K" in p else float(p["L"])

    pairs = []
    for ctx in contexts:
        eigs = hermitian_eigenvalues(ctx.D)
        count = int(np.count_nonzero(np.abs(eigs) <= radius))
        pairs.append((size(ctx), count))
    rep = VerificationReport(contexts[0].kind, contexts[0].params())
    degree_cap = contexts[0].kr_dim + 1.0
    for (s1, c1), (s2, c2) in zip(pairs, pairs[1:]):
        if c1 == 0 or s2 <= s1:
            raise ValueError("cutoff sequence must be increasing with nonzero counts")
        slope = float(np.log(c2 / c1) / np.log(s2 / s1)) if c2 != c1 else 0.0
        rep.add_info(f"eigenvalue_count_growth_{int(s1)}_{int(s2)}", slope, degree_cap)
    return rep
