"""Command line front end: verification suites, grading search, spectra.

Configs are JSON files with a strict schema; unknown keys are rejected so
a typo cannot silently change a run. All emitted JSON and CSV is
canonicalized, so repeated runs with the same config and seed produce
byte-identical artifacts.

Exit codes: 0 pass, 1 verification failure, 2 config error,
3 missing prerequisite for the requested output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_PREREQ = 3

_TOP_KEYS = {"geometry", "suite", "omega", "tolerances", "seed", "operator", "out"}
_TORUS_KEYS = {"kind", "n", "theta", "K", "convention"}
_SPHERE_KEYS = {"kind", "L", "theta", "r", "s", "alpha"}
_OMEGA_KEYS = {"terms"}
_TOL_KEYS = {"default", "strongness"}

SUITE_NAMES = (
    "real",
    "first-order",
    "equivariance",
    "charge",
    "calculus",
    "projection",
    "connection",
    "twist",
)
DEFAULT_SUITES = ("real", "first-order", "equivariance", "charge", "calculus")

SPECTRUM_OPERATORS = (
    "D",
    "D_h",
    "D_v",
    "D_omega",
    "script_D_omega",
    "D0_plus",
    "D0_minus",
)


class ConfigError(Exception):
    pass


class PrerequisiteError(Exception):
    pass


def _reject_unknown(mapping: dict, allowed: set, where: str):
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _parse_complex(value, where: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"cannot parse complex number {value!r} in {where}")
    raise ConfigError(f"expected a number or 're+imj' string in {where}")


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    _reject_unknown(cfg, _TOP_KEYS, "config")
    geom = cfg.get("geometry")
    if not isinstance(geom, dict) or "kind" not in geom:
        raise ConfigError("config needs a geometry object with a 'kind'")
    kind = geom["kind"]
    if kind == "torus":
        _reject_unknown(geom, _TORUS_KEYS, "geometry")
    elif kind == "sphere":
        _reject_unknown(geom, _SPHERE_KEYS, "geometry")
    else:
        raise ConfigError(f"unknown geometry kind {kind!r}")
    if "omega" in cfg:
        if not isinstance(cfg["omega"], dict):
            raise ConfigError("omega must be an object with a 'terms' list")
        _reject_unknown(cfg["omega"], _OMEGA_KEYS, "omega")
    if "tolerances" in cfg:
        if not isinstance(cfg["tolerances"], dict):
            raise ConfigError("tolerances must be an object")
        _reject_unknown(cfg["tolerances"], _TOL_KEYS, "tolerances")
    if "suite" in cfg:
        names = cfg["suite"]
        if not isinstance(names, list) or not all(isinstance(s, str) for s in names):
            raise ConfigError("suite must be a list of names")
        for s in names:
            if s not in SUITE_NAMES:
                raise ConfigError(f"unknown suite {s!r}")
    return cfg


def build_geometry(cfg: dict, cutoff_override=None):
    from .sphere import build_sphere
    from .torus import build_torus

    geom = cfg["geometry"]
    try:
        if geom["kind"] == "torus":
            cutoff = geom.get("K")
            if cutoff_override is not None:
                cutoff = int(cutoff_override)
            return build_torus(
                int(geom["n"]),
                geom["theta"],
                cutoff,
                convention=geom.get("convention", "weyl"),
            )
        cutoff = geom.get("L")
        if cutoff_override is not None:
            cutoff = float(cutoff_override)
        return build_sphere(
            float(cutoff),
            float(geom.get("theta", 0.0)),
            float(geom.get("r", 1.0)),
            _parse_complex(geom.get("s", 1.0), "geometry.s"),
            float(geom.get("alpha", 0.0)),
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid geometry: {exc}")


def build_omega(ctx, cfg: dict):
    from .connection import one_form

    spec = cfg.get("omega")
    if spec is None:
        return None
    terms = []
    for i, entry in enumerate(spec["terms"]):
        if not isinstance(entry, list) or len(entry) != 3:
            raise ConfigError(f"omega.terms[{i}] must be [coeff, left, right]")
        coeff = _parse_complex(entry[0], f"omega.terms[{i}]")
        terms.append((coeff, tuple(entry[1]), tuple(entry[2])))
    try:
        return one_form(ctx, terms)
    except KeyError as exc:
        raise ConfigError(f"omega references an unknown generator: {exc}")


def default_omega(ctx):
    from .connection import sphere_connection, torus_connection

    if ctx.kind == "sphere":
        return sphere_connection(ctx)
    return torus_connection(ctx)


def _run_suites(ctx, cfg, names, tol, seed):
    from . import connection as conn
    from . import projection as proj
    from . import verify

    reports = {}
    for name in names:
        if name == "real":
            reports[name] = verify.check_real_triple(ctx, tol=tol)
        elif name == "first-order":
            reports[name] = verify.check_first_order(ctx, tol=tol)
        elif name == "equivariance":
            reports[name] = verify.check_equivariance(ctx, tol=tol)
        elif name == "charge":
            reports[name] = verify.charge_block_report(ctx)
        elif name == "calculus":
            reports[name] = verify.check_calculus_compatibility(ctx, tol=tol, seed=seed)
        elif name == "projection":
            reports[name] = proj.verify_gamma(
                ctx,
                proj.canonical_gamma(ctx),
                proj.canonical_fiber_length(ctx),
                tol=max(tol, proj.VERIFY_TOL),
            )
        elif name == "connection":
            omega = build_omega(ctx, cfg) or default_omega(ctx)
            rep = conn.check_strong_connection(ctx, omega, tol=tol)
            pdata = proj.canonical_projection(ctx)
            rep.extend(conn.check_connection_algebra(ctx, omega, pdata, tol=tol))
            reports[name] = rep
        elif name == "twist":
            omega = build_omega(ctx, cfg) or default_omega(ctx)
            pdata = proj.canonical_projection(ctx)
            td = conn.twisted_dirac(ctx, pdata, omega, tol=tol)
            rep = td.report
            rep.extend(conn.check_compatibility(ctx, pdata, omega, tol=tol))
            reports[name] = rep
    return reports


def _write_or_print(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_verify(args) -> int:
    from .report import canonical_json

    cfg = load_config(args.config)
    ctx = build_geometry(cfg, args.cutoff_override)
    tol = args.tol if args.tol is not None else cfg.get("tolerances", {}).get(
        "default", 1e-10
    )
    seed = args.seed if args.seed is not None else cfg.get("seed", 20240817)
    if args.suite:
        names = args.suite.split(",")
        for s in names:
            if s not in SUITE_NAMES:
                raise ConfigError(f"unknown suite {s!r}")
    else:
        names = list(cfg.get("suite", DEFAULT_SUITES))
    reports = _run_suites(ctx, cfg, names, float(tol), int(seed))
    overall = all(rep.passed for rep in reports.values())
    payload = {
        "geometry": ctx.kind,
        "params": ctx.params(),
        "suites": {name: rep.to_dict() for name, rep in reports.items()},
        "pass": overall,
    }
    if args.out:
        _write_or_print(canonical_json(payload), args.out)
        for name, rep in reports.items():
            for line in rep.summary_lines():
                sys.stdout.write(f"[{name}] {line}\n")
        sys.stdout.write(f"overall: {'PASS' if overall else 'FAIL'}\n")
    else:
        sys.stdout.write(canonical_json(payload))
    return EXIT_PASS if overall else EXIT_FAIL


def cmd_gamma_search(args) -> int:
    from .projection import search_gamma
    from .report import canonical_json

    cfg = load_config(args.config)
    ctx = build_geometry(cfg, args.cutoff_override)
    seed = args.seed if args.seed is not None else cfg.get("seed", 20240817)
    tol = args.tol if args.tol is not None else cfg.get("tolerances", {}).get(
        "default", 1e-9
    )
    solutions = search_gamma(ctx, seed=int(seed), tol=float(tol))
    payload = {
        "geometry": ctx.kind,
        "params": ctx.params(),
        "count": len(solutions),
        "solutions": [sol.to_dict() for sol in solutions],
    }
    _write_or_print(canonical_json(payload), args.out)
    return EXIT_PASS


def _spectrum_operator(ctx, cfg, selector):
    from .connection import twisted_dirac
    from .projection import canonical_projection, split_even

    if selector == "D":
        return ctx.D
    pdata = canonical_projection(ctx)
    if selector == "D_h":
        return pdata.D_h
    if selector == "D_v":
        return pdata.D_v
    if selector in ("D_omega", "script_D_omega"):
        omega = build_omega(ctx, cfg)
        if omega is None:
            raise PrerequisiteError(
                f"operator {selector} needs an omega presentation in the config"
            )
        td = twisted_dirac(ctx, pdata, omega)
        return td.D_omega if selector == "D_omega" else td.script_D_omega
    if selector in ("D0_plus", "D0_minus"):
        if ctx.gamma is None:
            raise PrerequisiteError(
                f"operator {selector} needs an even parent triple"
            )
        plus, minus = split_even(ctx, pdata)
        return plus.D0 if selector == "D0_plus" else minus.D0
    raise ConfigError(f"unknown operator selector {selector!r}")


def cmd_spectrum(args) -> int:
    from .operators import hermitian_eigenvalues
    from .report import geometry_hash, spectrum_csv

    cfg = load_config(args.config)
    ctx = build_geometry(cfg, args.cutoff_override)
    selector = args.operator or cfg.get("operator", "D")
    if selector not in SPECTRUM_OPERATORS:
        raise ConfigError(
            f"unknown operator {selector!r}; choose from {', '.join(SPECTRUM_OPERATORS)}"
        )
    op = _spectrum_operator(ctx, cfg, selector)
    try:
        eigs = hermitian_eigenvalues(op)
    except ValueError as exc:
        raise ConfigError(str(exc))
    csv = spectrum_csv(eigs, selector, geometry_hash(ctx.params()))
    _write_or_print(csv, args.out)
    return EXIT_PASS


def _apply_thread_cap():
    cap = os.environ.get("NCG_THREADS")
    if not cap:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, cap)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nctriples",
        description="finite-cutoff spectral triple workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument(
            "--cutoff-override",
            type=float,
            default=None,
            help="replace the configured cutoff (K or L)",
        )

    p_verify = sub.add_parser("verify", help="run verification suites")
    common(p_verify)
    p_verify.add_argument(
        "--suite", default=None, help="comma-separated suite names"
    )

    p_search = sub.add_parser("gamma-search", help="search for bundle gradings")
    common(p_search)

    p_spec = sub.add_parser("spectrum", help="emit an operator spectrum as CSV")
    common(p_spec)
    p_spec.add_argument(
        "--operator", default=None, choices=SPECTRUM_OPERATORS
    )
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "gamma-search":
            return cmd_gamma_search(args)
        return cmd_spectrum(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except PrerequisiteError as exc:
        sys.stderr.write(f"prerequisite error: {exc}\n")
        return EXIT_PREREQ


if __name__ == "__main__":
    sys.exit(main())
