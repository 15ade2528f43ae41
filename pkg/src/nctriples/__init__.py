"""Finite-truncation workbench for U(1)-equivariant real spectral triples.

Builds truncated operator representations of noncommutative tori and the
deformed 3-sphere, checks the defining operator identities (real structure
signs, first-order condition, equivariance, projectability, strong
connections, twisted Dirac operators) on truncation-safe interior
subspaces, and reports spectra and residuals deterministically.
"""

from .operators import (
    AntilinearOperator,
    EmptyInteriorError,
    GeometryContext,
    InteriorSubspace,
    NonHermitianError,
    SparseOperator,
    anticommutator,
    commutator,
    hermitian_eigenvalues,
    residual_on_interior,
    restrict,
)

__all__ = [
    "AntilinearOperator",
    "EmptyInteriorError",
    "GeometryContext",
    "InteriorSubspace",
    "NonHermitianError",
    "SparseOperator",
    "anticommutator",
    "commutator",
    "hermitian_eigenvalues",
    "residual_on_interior",
    "restrict",
]

__version__ = "0.1.0"
