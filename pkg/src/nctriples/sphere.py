"""Truncated theta-deformed 3-sphere spectral triple.

Basis |l, m, n, sign> with l <= L in half-integer steps; all three labels
are stored as doubled integers (twice_l, twice_m, twice_n) so index
arithmetic stays exact. The two generators a, b act by Clebsch-Gordan
ladder coefficients with a deformation phase in the n label; the Dirac
family D(r, s, alpha) mixes the spinor sign components inside each (l, n)
shell. The charge operator is delta = 2m +- 1 on the sign components and
the grading is the sign label itself.

The real structure flips (m, n, sign) and carries, besides the parity
factor (-1)^(m+n), a quadratic deformation phase tied to the charge
coordinate m + sign/2. That phase is what makes conjugation land in the
commutant of the deformed product for every theta; it is trivial at
theta = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import AntilinearOperator, GeometryContext, Letter, SparseOperator

MIN_TWICE_L = 5  # l >= 5/2


def _phase(theta: float, exponent: float) -> complex:
    # exp(2 pi i theta * exponent), branch-free for fractional exponents
    return complex(np.exp(2j * np.pi * theta * exponent))


class SphereContext(GeometryContext):
    kind = "sphere"

    def __init__(self, twice_L: int, theta: float, r: float, s: complex, alpha: float):
        super().__init__()
        self.twice_L = twice_L
        self.theta = float(theta)
        self.lam = _phase(self.theta, 1.0)
        self.r = float(r)
        self.s = complex(s)
        self.alpha = float(alpha)
        self.kr_dim = 3
        self.basis = []
        for tl in range(twice_L + 1):
            for tm in range(-tl, tl + 1, 2):
                for tn in range(-tl, tl + 1, 2):
                    for sg in (+1, -1):
                        self.basis.append((tl, tm, tn, sg))
        self.dim = len(self.basis)
        self.index = {b: i for i, b in enumerate(self.basis)}
        self.pi_a: SparseOperator = None
        self.pi_b: SparseOperator = None
        self.Gamma: SparseOperator = None

    def params(self) -> dict:
        return {
            "kind": "sphere",
            "L": self.twice_L / 2.0,
            "theta": self.theta,
            "r": self.r,
            "s": complex(self.s),
            "alpha": self.alpha,
            "kr_dim": self.kr_dim,
        }

    def _interior_indices(self, margin: int) -> np.ndarray:
        bound = self.twice_L - 2 * margin
        if bound < 0:
            return np.array([], dtype=np.intp)
        return np.array(
            [i for i, (tl, _, _, _) in enumerate(self.basis) if tl <= bound],
            dtype=np.intp,
        )


def _generator_coefficients(ctx: SphereContext):
    """Ladder entries of pi(a) and pi(b) on the doubled-integer basis."""
    twL, theta = ctx.twice_L, ctx.theta
    rows_a, cols_a, vals_a = [], [], []
    rows_b, cols_b, vals_b = [], [], []
    for j, (tl, tm, tn, sg) in enumerate(ctx.basis):
        l = tl / 2.0
        m = tm / 2.0
        n = tn / 2.0
        ph_a = _phase(theta, -n)
        ph_b = _phase(theta, n)
        up_norm = np.sqrt(tl + 1.0) * np.sqrt(tl + 2.0)
        dn_norm = np.sqrt(tl) * np.sqrt(tl + 1.0) if tl > 0 else 1.0
        a_up = np.sqrt(l + 1.0 + m) * np.sqrt(l - n + 1.0)
        a_dn = np.sqrt(l - m) * np.sqrt(max(l + n, 0.0))
        b_up = np.sqrt(l - m + 1.0) * np.sqrt(l - n + 1.0)
        b_dn = np.sqrt(l + m) * np.sqrt(max(l + n, 0.0))
        for rows, cols, vals, ph, cu, cd, dm in (
            (rows_a, cols_a, vals_a, ph_a, a_up, a_dn, +1),
            (rows_b, cols_b, vals_b, ph_b, b_up, b_dn, -1),
        ):
            up = (tl + 1, tm + dm, tn - 1, sg)
            if tl + 1 <= twL and abs(tm + dm) <= tl + 1 and abs(tn - 1) <= tl + 1:
                coeff = ph * cu / up_norm
                if abs(coeff) > 0.0:
                    rows.append(ctx.index[up])
                    cols.append(j)
                    vals.append(coeff)
            down = (tl - 1, tm + dm, tn - 1, sg)
            if tl - 1 >= 0 and abs(tm + dm) <= tl - 1 and abs(tn - 1) <= tl - 1:
                sign = -1.0 if dm > 0 else +1.0
                coeff = sign * ph * cd / dn_norm
                if abs(coeff) > 0.0:
                    rows.append(ctx.index[down])
                    cols.append(j)
                    vals.append(coeff)
    dim = ctx.dim
    mat_a = SparseOperator.from_coo(dim, rows_a, cols_a, vals_a)
    mat_b = SparseOperator.from_coo(dim, rows_b, cols_b, vals_b)
    return mat_a, mat_b


def build_sphere(L, theta: float, r: float, s: complex, alpha: float) -> SphereContext:
    """Construct the truncated deformed 3-sphere with Dirac family D(r, s, alpha).

    L is the top total-spin label (half-integer steps allowed); r > 0 scales
    the vertical ladder, s is an arbitrary complex transverse coupling and
    alpha a real additive shift that commutes with the whole representation.
    """
    twice_L = int(round(2 * float(L)))
    if abs(2 * float(L) - twice_L) > 1e-12:
        raise ValueError("L must be an integer or half-integer")
    if twice_L < MIN_TWICE_L:
        raise ValueError(f"cutoff below minimum: L must be >= {MIN_TWICE_L / 2}")
    if float(r) <= 0:
        raise ValueError("r must be positive")
    ctx = SphereContext(twice_L, theta, r, s, alpha)

    pa, pb = _generator_coefficients(ctx)
    ctx.pi_a, ctx.pi_b = pa, pb
    ctx.letters["a"] = Letter(pa, +1)
    ctx.letters["a*"] = Letter(pa.adjoint(), -1)
    ctx.letters["b"] = Letter(pb, -1)
    ctx.letters["b*"] = Letter(pb.adjoint(), +1)

    diag_delta = np.array([tm + sg for (_, tm, _, sg) in ctx.basis], dtype=np.complex128)
    ctx.delta = SparseOperator.diagonal(diag_delta)
    diag_gamma = np.array([sg for (_, _, _, sg) in ctx.basis], dtype=np.complex128)
    ctx.Gamma = SparseOperator.diagonal(diag_gamma)

    rows, cols, vals = [], [], []
    rr, ss, al = ctx.r, ctx.s, ctx.alpha
    for j, (tl, tm, tn, sg) in enumerate(ctx.basis):
        l = tl / 2.0
        m = tm / 2.0
        if sg == +1:
            rows.append(j)
            cols.append(j)
            vals.append(rr * (m + 0.5) + al / 4.0)
            target = (tl, tm + 2, tn, -1)
            coeff = ss * np.sqrt(l + 1.0 + m) * np.sqrt(l - m)
            if abs(coeff) > 0.0 and target in ctx.index:
                rows.append(ctx.index[target])
                cols.append(j)
                vals.append(coeff)
        else:
            rows.append(j)
            cols.append(j)
            vals.append(-rr * (m - 0.5) + al / 4.0)
            target = (tl, tm - 2, tn, +1)
            coeff = np.conj(ss) * np.sqrt(l - m + 1.0) * np.sqrt(l + m)
            if abs(coeff) > 0.0 and target in ctx.index:
                rows.append(ctx.index[target])
                cols.append(j)
                vals.append(coeff)
    ctx.D = SparseOperator.from_coo(ctx.dim, rows, cols, vals)

    rows, cols, vals = [], [], []
    for j, (tl, tm, tn, sg) in enumerate(ctx.basis):
        target = (tl, -tm, -tn, -sg)
        parity = (-1.0) ** (((tm + tn) // 2) % 2)
        quad = -((tm + sg) * tn) // 2  # always an integer
        ph = sg * parity * _phase(ctx.theta, float(quad))
        rows.append(ctx.index[target])
        cols.append(j)
        vals.append(ph)
    ctx.J = AntilinearOperator(SparseOperator.from_coo(ctx.dim, rows, cols, vals))
    return ctx


def dirac_block_spectrum(ctx: SphereContext) -> np.ndarray:
    """Eigenvalues of D from the closed 2x2 block form, independently of D.

    Per (l, m, n) the components (m, +) and (m+1, -) pair into a block with
    eigenvalues alpha/4 +- sqrt(r^2 (m + 1/2)^2 + |s|^2 (l+1+m)(l-m)); the
    extremal components m = l (+) and m = -l (-) stay diagonal.
    """
    rr, ss, al = ctx.r, abs(ctx.s), ctx.alpha
    eigs = []
    for tl in range(ctx.twice_L + 1):
        l = tl / 2.0
        n_count = tl + 1  # values of the n label
        for tm in range(-tl, tl - 1, 2):
            m = tm / 2.0
            w2 = (l + 1.0 + m) * (l - m)
            root = np.sqrt((rr * (m + 0.5)) ** 2 + ss * ss * w2)
            for _ in range(n_count):
                eigs.append(al / 4.0 + root)
                eigs.append(al / 4.0 - root)
        edge = rr * (l + 0.5) + al / 4.0
        for _ in range(n_count):
            eigs.append(edge)  # (l, m = l, +)
            eigs.append(edge)  # (l, m = -l, -)
    return np.sort(np.array(eigs))


def invariant_subspace(ctx: SphereContext) -> np.ndarray:
    """Indices of the charge-zero subspace: (l, -1/2, n, +) and (l, 1/2, n, -)."""
    return np.array(
        [i for i, (_, tm, _, sg) in enumerate(ctx.basis) if tm + sg == 0],
        dtype=np.intp,
    )


@dataclass(frozen=True)
class InvariantPair:
    """Generators of the rotation-invariant subalgebra."""

    A: SparseOperator
    B: SparseOperator
    Bstar: SparseOperator


def invariant_pair(ctx: SphereContext) -> InvariantPair:
    a, b = ctx.pi_a, ctx.pi_b
    A = a @ a.adjoint() - 0.5 * SparseOperator.identity(ctx.dim)
    B = b @ a
    return InvariantPair(A, B, B.adjoint())


def check_invariant_algebra(ctx: SphereContext, margin: int = 4, tol: float = 1e-10):
    """Relations of the invariant pair: commutation and the radius identity."""
    from .operators import commutator, residual_on_interior
    from .report import VerificationReport

    pair = invariant_pair(ctx)
    interior = ctx.interior(margin)
    rep = VerificationReport("sphere", ctx.params())
    quarter = 0.25 * SparseOperator.identity(ctx.dim)
    rep.add("A_B_commute", residual_on_interior(commutator(pair.A, pair.B), interior), tol, margin)
    rep.add(
        "A_Bstar_commute",
        residual_on_interior(commutator(pair.A, pair.Bstar), interior),
        tol,
        margin,
    )
    rep.add(
        "radius_identity",
        residual_on_interior(pair.A @ pair.A + pair.B @ pair.Bstar - quarter, interior),
        tol,
        margin,
    )
    rep.add(
        "A_charge_zero",
        residual_on_interior(commutator(ctx.delta, pair.A), interior),
        tol,
        margin,
    )
    rep.add(
        "B_charge_zero",
        residual_on_interior(commutator(ctx.delta, pair.B), interior),
        tol,
        margin,
    )
    return rep
