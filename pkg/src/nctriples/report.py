"""Verification reports and deterministic serialization.

A report is a flat list of named residual records plus an overall pass
flag. Serialization is canonical: sorted keys, fixed indentation, trailing
newline, so identical runs produce byte-identical output.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class CheckRecord:
    name: str
    residual: float
    tol: float
    margin: Optional[int]
    passed: bool
    kind: str = "gate"  # "gate" records decide overall pass, "info" never fails

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": float(self.residual),
            "tol": float(self.tol),
            "margin": self.margin,
            "pass": bool(self.passed),
            "kind": self.kind,
        }


@dataclass
class VerificationReport:
    geometry: str
    params: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def add(self, name: str, residual: float, tol: float, margin: Optional[int] = None) -> CheckRecord:
        rec = CheckRecord(name, float(residual), float(tol), margin, float(residual) <= float(tol))
        self.checks.append(rec)
        return rec

    def add_info(self, name: str, residual: float, tol: float, margin: Optional[int] = None) -> CheckRecord:
        rec = CheckRecord(
            name, float(residual), float(tol), margin, float(residual) <= float(tol), kind="info"
        )
        self.checks.append(rec)
        return rec

    def extend(self, other: "VerificationReport"):
        self.checks.extend(other.checks)

    @property
    def passed(self) -> bool:
        return all(rec.passed for rec in self.checks if rec.kind == "gate")

    def residual(self, name: str) -> float:
        for rec in self.checks:
            if rec.name == name:
                return rec.residual
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry,
            "params": _jsonable(self.params),
            "checks": [rec.to_dict() for rec in self.checks],
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def summary_lines(self) -> list:
        out = []
        for rec in self.checks:
            tag = "PASS" if rec.passed else "FAIL"
            if rec.kind == "info":
                tag = "INFO"
            out.append(f"{tag} {rec.name}: residual {rec.residual:.3e} (tol {rec.tol:.1e})")
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def geometry_hash(params: dict) -> str:
    """Stable fingerprint of the geometry parameters for report provenance."""
    blob = canonical_json(params).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def merge_spectrum(eigs, tol: float = 1e-9) -> list:
    """Cluster a sorted eigenvalue sequence into (value, multiplicity) pairs."""
    out = []
    eigs = np.sort(np.asarray(eigs, dtype=float))
    i = 0
    while i < eigs.size:
        j = i + 1
        while j < eigs.size and eigs[j] - eigs[j - 1] <= tol:
            j += 1
        out.append((float(np.mean(eigs[i:j])), int(j - i)))
        i = j
    return out


def spectrum_csv(eigs, operator_tag: str, geom_hash: str, tol: float = 1e-9) -> str:
    """CSV rows: eigenvalue (17 significant digits), multiplicity, tag, hash."""
    lines = ["eigenvalue,multiplicity,operator,geometry"]
    for value, mult in merge_spectrum(eigs, tol):
        lines.append(f"{value:.17g},{mult},{operator_tag},{geom_hash}")
    return "\n".join(lines) + "\n"
